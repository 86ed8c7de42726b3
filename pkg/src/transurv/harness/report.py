"""Renderings of a :class:`ResultsTable`.

``csv``   one row per (size, method) cell with mean, sd and the fold scores;
          parsed back by :func:`read_results_csv`.
``text``  aligned mean +- sd table; ``^`` marks the row maximum and ``*``
          cells below the reference column.
``trend`` tab-separated size x method means for external plotting.
``png``   the same trend as a chart.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from .cv import FULL
from .grid import ResultsTable

CSV_HEADER = ["size", "method", "mean", "sd", "n_folds", "best", "below_reference",
              "reference", "fold_scores"]
FORMATS = ("csv", "text", "trend", "png")


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else repr(x)


def render_csv(table: ResultsTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for size in table.sizes:
        best = table.best(size) if table.methods else None
        for m in table.methods:
            folds = ";".join("NA" if s is None else repr(float(s))
                             for s in table.scores[(size, m)])
            w.writerow([size, m, _num(table.mean(size, m)), _num(table.sd(size, m)),
                        len(table.values(size, m)), int(m == best),
                        int(table.below_reference(size, m)), table.reference or "", folds])
    return buf.getvalue()


def _size_from(cell: str):
    return FULL if cell == FULL else int(cell)


def read_results_csv(path) -> ResultsTable:
    sizes, methods, scores, reference = [], [], {}, None
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames!r}")
        for row in reader:
            size = _size_from(row["size"])
            if size not in sizes:
                sizes.append(size)
            if row["method"] not in methods:
                methods.append(row["method"])
            reference = row["reference"] or None
            cells = row["fold_scores"].split(";") if row["fold_scores"] else []
            scores[(size, row["method"])] = tuple(None if c == "NA" else float(c) for c in cells)
    return ResultsTable(tuple(sizes), tuple(methods), scores, reference)


def render_text(table: ResultsTable) -> str:
    head = ["n", *table.methods]
    rows = []
    for size in table.sizes:
        best = table.best(size)
        row = [str(size)]
        for m in table.methods:
            cell = f"{table.mean(size, m):.4f} +- {table.sd(size, m):.4f}"
            cell += "^" if m == best else " "
            cell += "*" if table.below_reference(size, m) else " "
            row.append(cell)
        rows.append(row)
    widths = [max(len(r[j]) for r in [head, *rows]) for j in range(len(head))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() for r in [head, *rows]]
    if table.sizes:
        lines.append("")
        lines.append(f"^ row maximum; * below {table.reference}" if table.reference
                     else "^ row maximum")
    return "\n".join(lines) + "\n"


def render_trend(table: ResultsTable) -> str:
    lines = ["\t".join(["size", *table.methods])]
    for size in table.sizes:
        lines.append("\t".join([str(size), *(_num(table.mean(size, m)) for m in table.methods)]))
    return "\n".join(lines) + "\n"


def plot_trend(table: ResultsTable, path, title: str = "") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    sizes = [s for s in table.sizes if s != FULL]
    fig, ax = plt.subplots(figsize=(6, 4))
    for m in table.methods:
        means = [table.mean(s, m) for s in sizes]
        sds = [table.sd(s, m) for s in sizes]
        ax.errorbar(sizes, means, yerr=sds, marker="o", capsize=3, label=m)
    ax.set_xscale("log")
    ax.set_xlabel("target training size")
    ax.set_ylabel("held-out C$^{td}$")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def emit_results(table: ResultsTable, path, fmt: str = "csv") -> Path:
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    path = Path(path)
    if fmt == "png":
        plot_trend(table, path)
        return path
    text = {"csv": render_csv, "text": render_text, "trend": render_trend}[fmt](table)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path
