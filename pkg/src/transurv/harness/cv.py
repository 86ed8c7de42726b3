"""Stratified K-fold evaluation with training-size subsampling.

One fold is held out for testing; ``n`` training subjects are drawn
(stratified by event indicator, without replacement) from the remaining
folds. The fold partition depends only on the cohort and the plan seed, so
every method and every size is scored on the same test subjects.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..core import Cohort, concordance_td
from ..seeding import derive_seed, rng_for

FULL = "full"
DEFAULT_SIZES = (FULL, 500, 200, 100, 80, 50, 40, 20)


def size_key(n) -> int:
    """Integer used in seed derivation (0 stands for the full pool)."""
    return 0 if n == FULL else int(n)


@dataclass(frozen=True)
class CvPlan:
    n_folds: int = 10
    sizes: tuple = DEFAULT_SIZES
    rng_seed: int = 0
    max_folds: Optional[int] = None   # evaluate only the first folds (desk runs)

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError("n_folds must be >= 2")
        for n in self.sizes:
            if n != FULL and int(n) < 1:
                raise ValueError(f"invalid training size {n!r}")
        if self.max_folds is not None and not 1 <= self.max_folds <= self.n_folds:
            raise ValueError("max_folds must lie in [1, n_folds]")

    @property
    def evaluated_folds(self) -> range:
        return range(self.max_folds or self.n_folds)

    def folds(self, cohort: Cohort) -> np.ndarray:
        """Fold label per subject; events and non-events dealt round-robin."""
        rng = rng_for(self.rng_seed, "folds")
        e = cohort.events == 1
        order = np.r_[rng.permutation(np.flatnonzero(e)), rng.permutation(np.flatnonzero(~e))]
        labels = np.empty(cohort.n_subjects, dtype=int)
        labels[order] = np.arange(len(order)) % self.n_folds
        return labels

    def check_sizes(self, cohort: Cohort) -> None:
        pool = cohort.n_subjects - int(np.ceil(cohort.n_subjects / self.n_folds))
        for n in self.sizes:
            if n != FULL and int(n) > pool:
                raise ValueError(f"training size {n} exceeds the per-fold pool of {pool}")

    def training_indices(self, cohort: Cohort, labels: np.ndarray, fold: int, n) -> np.ndarray:
        """Stratified sample of size ``n`` from the subjects outside ``fold``."""
        pool = np.flatnonzero(labels != fold)
        if n == FULL:
            return pool
        n = int(n)
        if n > len(pool):
            raise ValueError(f"training size {n} exceeds the pool of {len(pool)}")
        rng = rng_for(self.rng_seed, "subsample", fold, n)
        ev = pool[cohort.events[pool] == 1]
        ne = pool[cohort.events[pool] == 0]
        k = int(round(n * len(ev) / len(pool)))
        k = min(max(k, 1 if len(ev) else 0), len(ev), n)
        k = max(k, n - len(ne))
        pick = np.r_[rng.choice(ev, k, replace=False), rng.choice(ne, n - k, replace=False)]
        return np.sort(pick)

    def model_seed(self, fold: int, n) -> int:
        return derive_seed(self.rng_seed, "model", fold, size_key(n))


# a factory maps (training cohort, seed) to a predictor of survival curves
ModelFactory = Callable[[Cohort, int], Callable]


def evaluate_fold(target: Cohort, plan: CvPlan, labels, fold: int, factory, n):
    test = target.subset(np.flatnonzero(labels == fold))
    if not np.any(test.events == 1):
        return None
    train = target.subset(plan.training_indices(target, labels, fold, n))
    predictor = factory(train, plan.model_seed(fold, n))
    return concordance_td(test, predictor(test.covariates))


def run_cv(target: Cohort, plan: CvPlan, model_factory: ModelFactory, n,
           n_jobs: int = 1) -> list:
    """Held-out C^td per evaluated fold; ``None`` marks an event-free test fold."""
    labels = plan.folds(target)
    folds = list(plan.evaluated_folds)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            scores = list(pool.map(lambda f: evaluate_fold(target, plan, labels, f,
                                                           model_factory, n), folds))
    else:
        scores = [evaluate_fold(target, plan, labels, f, model_factory, n) for f in folds]
    absent = sum(s is None for s in scores)
    if absent:
        warnings.warn(f"{absent} test fold(s) without events excluded", RuntimeWarning)
    return scores
