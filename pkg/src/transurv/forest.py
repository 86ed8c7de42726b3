"""Log-rank survival trees and bootstrap random survival forests."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from .core import (Cohort, CurveBatch, StepFunction, _logrank_sorted,
                   build_event_table, nelson_aalen)
from .seeding import rng_for

# feature-policy decisions (see ``grow_tree``)
FREE = -1
STOP = -2


@dataclass(frozen=True)
class GrowthConfig:
    max_depth: Optional[int] = None
    min_leaf_size: int = 15
    min_split_events: int = 3
    mtry: Optional[int] = None
    n_split_candidates: int = 10
    rng_seed: int = 0
    bootstrap: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.min_leaf_size < 1 or self.min_split_events < 1:
            raise ValueError("min_leaf_size and min_split_events must be >= 1")
        if self.n_split_candidates < 1:
            raise ValueError("n_split_candidates must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")

    def resolve_mtry(self, n_features: int) -> int:
        m = self.mtry if self.mtry is not None else math.ceil(math.sqrt(n_features))
        if not 1 <= m <= n_features:
            raise ValueError(f"mtry={m} outside [1, {n_features}]")
        return m


@dataclass(frozen=True, eq=False)
class Terminal:
    cum_hazard: StepFunction
    n_samples: int


@dataclass(frozen=True, eq=False)
class Internal:
    feature_index: int
    split_value: float
    left: "Node"
    right: "Node"


Node = Union[Internal, Terminal]


@dataclass(frozen=True, eq=False)
class SurvivalTree:
    """A grown tree.

    ``truncated`` lists level-order positions where a prescribed split
    (transfer growth) was infeasible and the node was made terminal;
    ``prototype`` is the transferred structure the tree was grown from.
    """

    root: Node
    truncated: tuple = ()
    prototype: object = None

    def depth(self) -> int:
        def walk(node):
            if isinstance(node, Terminal):
                return 0
            return 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def nodes(self):
        """Yield ``(position, depth, node)`` in level order."""
        queue = [(0, 0, self.root)]
        while queue:
            pos, depth, node = queue.pop(0)
            yield pos, depth, node
            if isinstance(node, Internal):
                queue.append((2 * pos + 1, depth + 1, node.left))
                queue.append((2 * pos + 2, depth + 1, node.right))


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    config: GrowthConfig
    time_grid: np.ndarray
    n_features: int

    def __post_init__(self):
        if len(self.trees) < 1:
            raise ValueError("a forest needs at least one tree")
        grid = np.array(self.time_grid, dtype=float)
        grid.setflags(write=False)
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "time_grid", grid)

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def event_time_grid(cohort: Cohort) -> np.ndarray:
    return np.unique(cohort.durations[cohort.events == 1])


def _node_chf(t, e) -> StepFunction:
    # knots are the node's own event times, a subset of the forest grid, so
    # evaluating on the grid reproduces the grid-valued estimator exactly
    return nelson_aalen(build_event_table(t, e))


def _candidates(x, n_candidates):
    # np.quantile(..., method="lower") without its per-call overhead
    probs = np.arange(1, n_candidates + 1) / (n_candidates + 1)
    xs = np.sort(x)
    return np.unique(xs[np.floor(probs * (len(xs) - 1)).astype(int)])


def _split_search(x, t, e, features, config):
    """Best ``(feature, value, stat)`` over ``features`` or ``None``.

    Rows must be sorted by ``t``. Ties go to the lowest feature index, then
    the smallest split value.
    """
    n = len(t)
    if n < 2 * config.min_leaf_size or e.sum() < config.min_split_events:
        return None
    cols, owners, values = [], [], []
    for f in sorted(int(j) for j in features):
        col = x[:, f]
        vals = _candidates(col, config.n_split_candidates)
        member = col[:, None] <= vals[None, :]
        n_left = member.sum(axis=0)
        ok = (n_left >= config.min_leaf_size) & (n - n_left >= config.min_leaf_size)
        if np.any(ok):
            cols.append(member[:, ok])
            owners.extend([f] * int(ok.sum()))
            values.extend(vals[ok].tolist())
    if not cols:
        return None
    stats = _logrank_sorted(t, e, np.hstack(cols), presorted=True)
    # first maximum = lowest feature, then smallest value
    j = int(np.argmax(stats))
    if not stats[j] > 0:
        return None
    return owners[j], float(values[j]), float(stats[j])


def best_split(cohort_subset: Cohort, candidate_features, config: GrowthConfig,
               rng=None):
    """Log-rank-maximizing split of ``cohort_subset`` or ``None``.

    Split values are drawn from ``config.n_split_candidates`` within-node
    quantiles of each feature. ``rng`` is accepted for interface symmetry;
    candidate generation is deterministic.
    """
    order = np.argsort(cohort_subset.durations, kind="stable")
    return _split_search(cohort_subset.covariates[order],
                         cohort_subset.durations[order],
                         cohort_subset.events[order] == 1,
                         candidate_features, config)


FeaturePolicy = Callable[[int, int, np.random.Generator], int]


def free_policy(position, depth, rng):
    return FREE


def grow_tree(sample: Cohort, config: GrowthConfig, rng: np.random.Generator,
              time_grid=None, policy: FeaturePolicy = free_policy,
              prototype=None) -> SurvivalTree:
    """Grow one tree on ``sample`` by recursive log-rank partitioning.

    ``policy(position, depth, rng)`` decides each node's feature: ``FREE``
    samples ``mtry`` features as in a standard forest, ``STOP`` forces a
    terminal, and a feature index prescribes that feature alone. A
    prescribed feature that cannot split validly makes the node terminal and
    records its position in ``SurvivalTree.truncated``.

    Terminals keep their own Nelson-Aalen knots, so ``time_grid`` does not
    affect the tree; it is accepted so callers can pass the forest grid.
    """
    order = np.argsort(sample.durations, kind="stable")
    x = sample.covariates[order]
    t = sample.durations[order]
    e = sample.events[order] == 1
    p = x.shape[1]
    mtry = config.resolve_mtry(p)
    truncated = []

    def leaf(idx):
        return Terminal(_node_chf(t[idx], e[idx]), int(len(idx)))

    def grow(idx, depth, pos):
        decision = policy(pos, depth, rng)
        at_limit = config.max_depth is not None and depth >= config.max_depth
        if decision == STOP:
            return leaf(idx)
        if at_limit:
            if decision >= 0:
                truncated.append(pos)
            return leaf(idx)
        if decision >= 0:
            features = [decision]
        else:
            features = rng.choice(p, size=mtry, replace=False)
        split = _split_search(x[idx], t[idx], e[idx], features, config)
        if split is None:
            if decision >= 0:
                truncated.append(pos)
            return leaf(idx)
        f, v, _ = split
        go_left = x[idx, f] <= v
        left = grow(idx[go_left], depth + 1, 2 * pos + 1)
        right = grow(idx[~go_left], depth + 1, 2 * pos + 2)
        return Internal(f, v, left, right)

    root = grow(np.arange(len(t)), 0, 0)
    return SurvivalTree(root, tuple(sorted(truncated)), prototype)


def grow_trees(cohort: Cohort, n_trees: int, config: GrowthConfig, time_grid,
               make_policy=None, label: str = "tree") -> list:
    """Grow ``n_trees`` trees, each on its own bootstrap with its own RNG.

    ``make_policy(rng)`` returns ``(policy, prototype)`` for one tree;
    transfer variants sample their prototype there. Output order and content
    do not depend on ``config.n_jobs``.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n = cohort.n_subjects

    def one(i):
        rng = rng_for(config.rng_seed, label, i)
        policy, prototype = free_policy, None
        if make_policy is not None:
            policy, prototype = make_policy(rng)
        if config.bootstrap:
            sample = cohort.subset(rng.integers(0, n, size=n))
        else:
            sample = cohort
        return grow_tree(sample, config, rng, time_grid, policy, prototype)

    if config.n_jobs > 1:
        with ThreadPoolExecutor(config.n_jobs) as pool:
            return list(pool.map(one, range(n_trees)))
    return [one(i) for i in range(n_trees)]


def fit_forest(cohort: Cohort, n_trees: int = 500,
               config: GrowthConfig = GrowthConfig()) -> Forest:
    grid = event_time_grid(cohort)
    config.resolve_mtry(cohort.n_features)
    trees = grow_trees(cohort, n_trees, config, grid)
    return Forest(tuple(trees), config, grid, cohort.n_features)


def _route(tree: SurvivalTree, x, out, grid):
    stack = [(tree.root, np.arange(len(x)))]
    while stack:
        node, idx = stack.pop()
        if len(idx) == 0:
            continue
        if isinstance(node, Terminal):
            out[idx] += node.cum_hazard(grid)
            continue
        go_left = x[idx, node.feature_index] <= node.split_value
        stack.append((node.right, idx[~go_left]))
        stack.append((node.left, idx[go_left]))


def predict_chf_matrix(forest: Forest, x) -> np.ndarray:
    """Ensemble cumulative hazard, shape ``(n, len(time_grid))``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != forest.n_features:
        raise ValueError(
            f"expected {forest.n_features} features, got {x.shape[1]}")
    total = np.zeros((len(x), len(forest.time_grid)))
    for tree in forest.trees:
        _route(tree, x, total, forest.time_grid)
    return total / forest.n_trees


def predict_chf(forest: Forest, x) -> StepFunction:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("predict_chf takes a single covariate vector")
    return StepFunction(forest.time_grid, predict_chf_matrix(forest, x[None])[0], 0.0)


def predict_survival(forest: Forest, x) -> CurveBatch:
    return CurveBatch(forest.time_grid, np.exp(-predict_chf_matrix(forest, x)))


def predict_risk(forest: Forest, x) -> np.ndarray:
    """Ensemble mortality: cumulative hazard summed over the time grid."""
    return predict_chf_matrix(forest, x).sum(axis=1)


def with_config(config: GrowthConfig, **changes) -> GrowthConfig:
    return replace(config, **changes)
