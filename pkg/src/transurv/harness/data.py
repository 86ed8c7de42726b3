"""Cohort CSV files with a JSON schema sidecar.

The CSV has a header row with a duration column, an event column (0/1) and
feature columns. The sidecar (``<file>.schema.json`` by default) names those
columns and declares categorical encodings::

    {"format_version": 1, "duration": "duration", "event": "event",
     "features": [{"name": "age"},
                  {"name": "cea", "categories": {"normal": 0, "high": 1},
                   "unknown_code": 2}]}

Numeric cells are parsed with ``float`` and written with ``repr`` so a
write/load round trip is exact.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import Cohort

SCHEMA_VERSION = 1


class CohortFormatError(ValueError):
    """Malformed cohort file; ``row`` is the 1-based data row (header excluded)."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class FeatureColumn:
    name: str
    categories: Optional[dict] = None
    unknown_code: Optional[float] = None

    def encode(self, cell: str, row: int) -> float:
        if self.categories is None:
            try:
                return float(cell)
            except ValueError:
                raise CohortFormatError(f"cannot parse {cell!r} as a number", row, self.name) from None
        if cell in self.categories:
            return float(self.categories[cell])
        if self.unknown_code is not None:
            return float(self.unknown_code)
        raise CohortFormatError(f"unknown category {cell!r}", row, self.name)


@dataclass(frozen=True)
class CohortSchema:
    features: tuple
    duration: str = "duration"
    event: str = "event"

    @classmethod
    def numeric(cls, names) -> "CohortSchema":
        return cls(tuple(FeatureColumn(n) for n in names))

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            d = {"name": f.name}
            if f.categories is not None:
                d["categories"] = dict(f.categories)
            if f.unknown_code is not None:
                d["unknown_code"] = f.unknown_code
            feats.append(d)
        return {"format_version": SCHEMA_VERSION, "duration": self.duration,
                "event": self.event, "features": feats}

    @classmethod
    def from_dict(cls, d: dict) -> "CohortSchema":
        if d.get("format_version") != SCHEMA_VERSION:
            raise CohortFormatError(f"unsupported schema version {d.get('format_version')!r}")
        feats = tuple(FeatureColumn(f["name"], f.get("categories"), f.get("unknown_code"))
                      for f in d["features"])
        return cls(feats, d.get("duration", "duration"), d.get("event", "event"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "CohortSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))


def schema_path(csv_path) -> Path:
    return Path(str(csv_path) + ".schema.json")


def load_cohort_csv(path, schema: Optional[CohortSchema] = None) -> Cohort:
    """Read a cohort; without a schema the sidecar is used if present,
    otherwise every non-outcome column is taken as numeric."""
    path = Path(path)
    if schema is None and schema_path(path).exists():
        schema = CohortSchema.load(schema_path(path))
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortFormatError("missing header row") from None
        if schema is None:
            schema = CohortSchema.numeric(
                [h for h in header if h not in ("duration", "event")])
        col = {name: j for j, name in enumerate(header)}
        for name in (schema.duration, schema.event, *(f.name for f in schema.features)):
            if name not in col:
                raise CohortFormatError("missing column", column=name)
        rows_t, rows_e, rows_x = [], [], []
        for r, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) != len(header):
                raise CohortFormatError(f"expected {len(header)} cells, found {len(cells)}", r)
            cell = cells[col[schema.duration]]
            try:
                t = float(cell)
            except ValueError:
                raise CohortFormatError(f"cannot parse {cell!r} as a duration", r,
                                        schema.duration) from None
            if not np.isfinite(t) or t < 0:
                raise CohortFormatError("duration must be finite and non-negative", r,
                                        schema.duration)
            ev = cells[col[schema.event]].strip()
            if ev not in ("0", "1"):
                raise CohortFormatError(f"event must be 0 or 1, got {ev!r}", r, schema.event)
            rows_t.append(t)
            rows_e.append(int(ev))
            rows_x.append([f.encode(cells[col[f.name]], r) for f in schema.features])
    if not rows_t:
        raise CohortFormatError("no data rows")
    x = np.array(rows_x, dtype=float).reshape(len(rows_t), len(schema.features))
    return Cohort(x, rows_t, rows_e, tuple(f.name for f in schema.features))


def write_cohort_csv(cohort: Cohort, path, schema: Optional[CohortSchema] = None) -> None:
    """Write the cohort and its schema sidecar (numeric columns unless given)."""
    path = Path(path)
    schema = schema or CohortSchema.numeric(cohort.feature_names)
    decoders = []
    for f in schema.features:
        inverse = {float(v): k for k, v in (f.categories or {}).items()}
        decoders.append(inverse)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([schema.duration, schema.event, *(f.name for f in schema.features)])
        for t, e, row in zip(cohort.durations, cohort.events, cohort.covariates):
            cells = [inv.get(v, repr(float(v))) if inv else repr(float(v))
                     for v, inv in zip(row, decoders)]
            w.writerow([repr(float(t)), int(e), *cells])
    schema.save(schema_path(path))
