"""Experiment grids: training sizes x methods, scored fold by fold."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import Cohort
from .cv import FULL, CvPlan, evaluate_fold


@dataclass(frozen=True)
class ResultsTable:
    """Per-fold C^td for every (size, method) cell.

    ``scores[(size, method)]`` is a tuple with one entry per evaluated fold;
    ``None`` marks a fold without test events. ``reference`` names the
    column other cells are compared against (cells below it are flagged).
    """

    sizes: tuple = ()
    methods: tuple = ()
    scores: dict = field(default_factory=dict)
    reference: Optional[str] = "Target"

    def values(self, size, method) -> np.ndarray:
        return np.array([s for s in self.scores[(size, method)] if s is not None], dtype=float)

    def mean(self, size, method) -> float:
        v = self.values(size, method)
        return float(v.mean()) if len(v) else float("nan")

    def sd(self, size, method) -> float:
        v = self.values(size, method)
        return float(v.std(ddof=1)) if len(v) > 1 else 0.0

    def best(self, size) -> str:
        means = [self.mean(size, m) for m in self.methods]
        return self.methods[int(np.nanargmax(means))]

    def below_reference(self, size, method) -> bool:
        if self.reference is None or self.reference not in self.methods or method == self.reference:
            return False
        return self.mean(size, method) < self.mean(size, self.reference)

    def column(self, method) -> list:
        return [self.mean(size, method) for size in self.sizes]


def run_experiment_grid(target: Cohort, plan: CvPlan, methods, n_jobs: int = 1,
                        reference: Optional[str] = "Target") -> ResultsTable:
    """Score every method at every plan size on the same test folds.

    Methods that ignore the training data are fitted once per fold and the
    same scores are reused for every size. Jobs run on ``n_jobs`` threads;
    every job's randomness is derived from the plan seed and its
    coordinates, so the table does not depend on scheduling.
    """
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ValueError("method names must be unique")
    plan.check_sizes(target)
    labels = plan.folds(target)
    folds = list(plan.evaluated_folds)
    jobs = []
    for m in methods:
        sizes = plan.sizes if m.uses_training else (FULL,)
        jobs += [(m, n, f) for n in sizes for f in folds]

    def run(job):
        m, n, f = job
        return evaluate_fold(target, plan, labels, f, m.factory, n)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    by_job = {(m.name, n, f): r for (m, n, f), r in zip(jobs, results)}
    scores = {}
    for m in methods:
        for n in plan.sizes:
            key = n if m.uses_training else FULL
            scores[(n, m.name)] = tuple(by_job[(m.name, key, f)] for f in folds)
    absent = sum(s is None for s in by_job.values())
    if absent:
        warnings.warn(f"{absent} fold evaluations without test events excluded", RuntimeWarning)
    return ResultsTable(tuple(plan.sizes), tuple(names), scores, reference)
