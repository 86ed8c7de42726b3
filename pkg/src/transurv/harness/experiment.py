"""End-to-end transfer experiments on one source/target pair."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..core import Cohort
from .cv import CvPlan
from .grid import ResultsTable, run_experiment_grid
from .methods import ForestSuite, NetworkSuite


@dataclass(frozen=True)
class ExperimentConfig:
    plan: CvPlan = field(default_factory=CvPlan)
    forest: ForestSuite = field(default_factory=ForestSuite)
    networks: tuple = tuple(NetworkSuite(kind=k) for k in ("deepsurv", "coxcc", "deephit"))
    include_forest: bool = True
    n_jobs: int = 1

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Same settings with every component reseeded from ``seed``."""
        return replace(self, plan=replace(self.plan, rng_seed=seed),
                       forest=replace(self.forest, seed=seed),
                       networks=tuple(replace(s, seed=seed) for s in self.networks))


def run_transfer_experiment(source: Cohort, target: Cohort,
                            config: ExperimentConfig) -> dict:
    """Fit source models, then score every family's methods on the target.

    Returns ``{family: ResultsTable}`` with family ``"forest"`` and one entry
    per network kind.
    """
    tables = {}
    if config.include_forest:
        source_forest = config.forest.fit_source(source)
        tables["forest"] = run_experiment_grid(target, config.plan,
                                               config.forest.methods(source_forest),
                                               n_jobs=config.n_jobs)
    for suite in config.networks:
        pretrained = suite.fit_source(source)
        tables[suite.kind] = run_experiment_grid(target, config.plan, suite.methods(pretrained),
                                                 n_jobs=config.n_jobs)
    return tables


def merge_seeds(tables) -> ResultsTable:
    """Pool per-fold scores of replicate tables (same sizes and methods)."""
    tables = list(tables)
    first = tables[0]
    scores = {key: tuple(s for t in tables for s in t.scores[key]) for key in first.scores}
    return ResultsTable(first.sizes, first.methods, scores, first.reference)
