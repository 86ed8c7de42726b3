"""Command-line interface: ``transurv <command> [options]``.

Commands
--------
synth       generate a synthetic source/target cohort pair as CSV files
fit-source  fit a source forest or network and serialize it
transfer    adapt a serialized source artifact to a target cohort
evaluate    held-out C^td of a serialized model on a cohort file
experiment  run the size x method grid and write tables and trend charts
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import serialize
from .core import concordance_td
from .forest import Forest, GrowthConfig, fit_forest, predict_survival
from .harness.cv import FULL
from .harness.data import load_cohort_csv, write_cohort_csv
from .harness.experiment import run_transfer_experiment
from .harness.presets import TARGET_GROWTH, shifted_pair_spec, trend_config
from .harness.report import emit_results
from .harness.synth import DomainShift, generate_synthetic_pair
from .nn import SurvivalNetwork, TrainConfig, predict_curves
from .transfer_nn import Mode, TransferProtocol, adapt, pretrain
from .tsf import (TransferConfig, build_depthwise_distribution,
                  build_structure_distribution, fit_dp_forest,
                  fit_transfer_forest, fit_transfer_forest_unlimited)

log = logging.getLogger("transurv")

NETWORK_LOSSES = ("deepsurv", "coxcc", "deephit")
FOREST_MODES = ("tsf", "tsf-inf", "dp", "target")
NETWORK_MODES = tuple(m.value for m in Mode)


def _sizes(text: str) -> tuple:
    out = []
    for part in text.split(","):
        part = part.strip()
        out.append(FULL if part == FULL else int(part))
    return tuple(out)


def _k(text: str):
    return None if text in ("inf", "none") else int(text)


def cmd_synth(args) -> None:
    spec = shifted_pair_spec(args.seed, args.n_source, args.n_target)
    if args.no_shift:
        spec = replace(spec, shift=DomainShift(censoring_delta=spec.shift.censoring_delta))
    source, target = generate_synthetic_pair(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cohort_csv(source, out / "source.csv")
    write_cohort_csv(target, out / "target.csv")
    log.info("wrote %d source and %d target subjects to %s",
             source.n_subjects, target.n_subjects, out)


def cmd_fit_source(args) -> None:
    source = load_cohort_csv(args.source)
    if args.loss == "rsf":
        model = fit_forest(source, args.n_trees, GrowthConfig(rng_seed=args.seed, n_jobs=args.jobs))
    else:
        cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                          batch_size=args.batch_size, rng_seed=args.seed)
        model = pretrain(source, args.loss, cfg)
    serialize.save(model, args.out)
    log.info("saved %s to %s", type(model).__name__, args.out)


def cmd_transfer(args) -> None:
    artifact = serialize.load(args.artifact)
    target = load_cohort_csv(args.target)
    if isinstance(artifact, SurvivalNetwork):
        if args.mode not in NETWORK_MODES:
            raise SystemExit(f"network modes: {', '.join(NETWORK_MODES)}")
        cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                          batch_size=args.batch_size, rng_seed=args.seed)
        model = adapt(artifact, target, TransferProtocol(Mode(args.mode), cfg))
    elif isinstance(artifact, Forest):
        if args.mode not in FOREST_MODES:
            raise SystemExit(f"forest modes: {', '.join(FOREST_MODES)}")
        growth = replace(TARGET_GROWTH, n_jobs=args.jobs)
        cfg = TransferConfig(args.n_trees, args.k, growth, args.seed)
        if args.mode == "tsf" and args.k is not None:
            model = fit_transfer_forest(build_structure_distribution(artifact, args.k), target, cfg)
        elif args.mode in ("tsf", "tsf-inf"):
            model = fit_transfer_forest_unlimited(artifact, target, replace(cfg, k=None))
        elif args.mode == "dp":
            model = fit_dp_forest(build_depthwise_distribution(artifact, args.k or 2), target, cfg)
        else:
            model = fit_forest(target, args.n_trees, replace(growth, rng_seed=args.seed))
    else:
        raise SystemExit(f"cannot transfer a {type(artifact).__name__}")
    serialize.save(model, args.out)
    log.info("saved adapted %s to %s", type(model).__name__, args.out)


def cmd_evaluate(args) -> None:
    model = serialize.load(args.model)
    cohort = load_cohort_csv(args.cohort)
    if isinstance(model, Forest):
        curves = predict_survival(model, cohort.covariates)
    elif isinstance(model, SurvivalNetwork):
        curves = predict_curves(model, cohort.covariates)
    else:
        raise SystemExit(f"cannot evaluate a {type(model).__name__}")
    print(f"C_td\t{concordance_td(cohort, curves)!r}")


def cmd_experiment(args) -> None:
    if args.source and args.target:
        source, target = load_cohort_csv(args.source), load_cohort_csv(args.target)
    else:
        source, target = generate_synthetic_pair(shifted_pair_spec(args.seed))
    config = trend_config(sizes=args.sizes, n_trees=args.n_trees, n_folds=args.folds,
                          max_folds=args.max_folds, n_jobs=args.jobs)
    config = replace(config, forest=replace(config.forest, ks=tuple(args.k_values)))
    if args.loss == "rsf":
        config = replace(config, networks=())
    elif args.loss != "all":
        config = replace(config, include_forest=False,
                         networks=tuple(s for s in config.networks if s.kind == args.loss))
    tables = run_transfer_experiment(source, target, config.with_seed(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for family, table in tables.items():
        for fmt, ext in (("csv", "csv"), ("text", "txt"), ("trend", "tsv"), ("png", "png")):
            emit_results(table, out / f"results_{family}.{ext}", fmt)
        print(f"== {family}")
        print((out / f"results_{family}.txt").read_text(), end="")
    log.info("results written to %s", out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transurv", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--seed", type=int, default=0, help="master seed")
        sp.add_argument("--out", required=True, help=out_help)

    def training(sp):
        sp.add_argument("--epochs", type=int, default=20)
        sp.add_argument("--lr", type=float, default=0.01)
        sp.add_argument("--batch-size", type=int, default=128)
        sp.add_argument("--jobs", type=int, default=1, help="threads for tree growth")

    s = sub.add_parser("synth", help="generate a synthetic cohort pair")
    common(s, "output directory")
    s.add_argument("--n-source", type=int, default=5000)
    s.add_argument("--n-target", type=int, default=3000)
    s.add_argument("--no-shift", action="store_true", help="same distribution in both domains")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("fit-source", help="fit and serialize a source model")
    common(s, "output JSON artifact")
    s.add_argument("--source", required=True, help="source cohort CSV")
    s.add_argument("--loss", choices=("rsf",) + NETWORK_LOSSES, default="rsf")
    s.add_argument("--n-trees", type=int, default=500)
    training(s)
    s.set_defaults(func=cmd_fit_source)

    s = sub.add_parser("transfer", help="adapt a source artifact to a target cohort")
    common(s, "output JSON artifact")
    s.add_argument("--artifact", required=True, help="serialized source model")
    s.add_argument("--target", required=True, help="target cohort CSV")
    s.add_argument("--mode", required=True, choices=FOREST_MODES + NETWORK_MODES)
    s.add_argument("--k", type=_k, default=2, help="levels transferred (an integer or 'inf')")
    s.add_argument("--n-trees", type=int, default=500)
    training(s)
    s.set_defaults(func=cmd_transfer)

    s = sub.add_parser("evaluate", help="C^td of a serialized model on a cohort")
    s.add_argument("--model", required=True)
    s.add_argument("--cohort", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("experiment", help="run the transfer grid")
    common(s, "output directory for tables and charts")
    s.add_argument("--source", help="source cohort CSV (synthetic pair if omitted)")
    s.add_argument("--target", help="target cohort CSV")
    s.add_argument("--sizes", type=_sizes, default=(500, 200, 80, 40, 20),
                   help="comma-separated training sizes, 'full' for the whole pool")
    s.add_argument("--k", dest="k_values", type=_k, nargs="+", default=[1, 2, None],
                   help="TSF levels to compare ('inf' for whole trees)")
    s.add_argument("--n-trees", type=int, default=50)
    s.add_argument("--loss", choices=("all", "rsf") + NETWORK_LOSSES, default="all",
                   help="restrict to the forest family or one network loss")
    s.add_argument("--folds", type=int, default=10)
    s.add_argument("--max-folds", type=int, default=None, help="evaluate only the first folds")
    s.add_argument("--jobs", type=int, default=1, help="worker threads")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
