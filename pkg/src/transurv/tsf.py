"""Transfer survival forests.

A source forest is summarized either by the empirical distribution of its
top-``k`` tree structures (which feature splits at which level-order
position) or by per-depth feature frequencies. Target trees are then grown
on target data with those features prescribed and split values re-chosen
from target subjects only.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Cohort
from .forest import (FREE, STOP, Forest, GrowthConfig, Internal, SurvivalTree,
                     event_time_grid, grow_tree, grow_trees)

LEAF = -1


@dataclass(frozen=True)
class StructureSignature:
    """Features at level-order positions of a tree's top ``k`` levels.

    Stored sparsely as sorted ``(position, feature)`` pairs; every position
    not listed is ``LEAF``. Position 0 is the root, the children of ``p`` are
    ``2p + 1`` (``<=`` branch) and ``2p + 2``. ``k=None`` means unlimited.
    """

    k: Optional[int]
    nodes: tuple

    def __post_init__(self):
        nodes = tuple(sorted((int(p), int(f)) for p, f in self.nodes))
        present = {p for p, _ in nodes}
        for p, f in nodes:
            if f < 0:
                raise ValueError("feature indices must be non-negative")
            if p > 0 and (p - 1) // 2 not in present:
                raise ValueError(f"position {p} has a LEAF ancestor")
            if self.k is not None and _depth_of(p) >= self.k:
                raise ValueError(f"position {p} lies below level {self.k}")
        object.__setattr__(self, "nodes", nodes)

    def feature_at(self, position: int) -> int:
        return dict(self.nodes).get(position, LEAF)

    def positions(self) -> list:
        """Dense level-order list (LEAF-filled); only for finite ``k``."""
        if self.k is None:
            raise ValueError("dense form needs a finite k")
        out = [LEAF] * (2 ** self.k - 1)
        for p, f in self.nodes:
            out[p] = f
        return out

    @classmethod
    def from_positions(cls, positions, k=None):
        if k is None:
            k = int(np.log2(len(positions) + 1))
        return cls(k, tuple((p, f) for p, f in enumerate(positions) if f != LEAF))


def _depth_of(position: int) -> int:
    return (position + 1).bit_length() - 1


def extract_signature(tree: SurvivalTree, k: Optional[int]) -> StructureSignature:
    """Split features of the top ``k`` levels; split values are dropped."""
    if k is not None and k < 1:
        raise ValueError("k must be >= 1")
    nodes = [(pos, node.feature_index) for pos, depth, node in tree.nodes()
             if isinstance(node, Internal) and (k is None or depth < k)]
    return StructureSignature(k, tuple(nodes))


@dataclass(frozen=True)
class StructureDistribution:
    k: Optional[int]
    entries: dict
    source_n_trees: int

    def __post_init__(self):
        if not self.entries:
            raise ValueError("empty structure distribution")
        if any(p <= 0 for p in self.entries.values()):
            raise ValueError("probabilities must be positive")
        if abs(sum(self.entries.values()) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")

    def support(self) -> list:
        """Signatures in a canonical order (independent of insertion)."""
        return sorted(self.entries, key=lambda s: s.nodes)


def build_structure_distribution(source_forest: Forest, k: Optional[int]) -> StructureDistribution:
    counts = Counter(extract_signature(tree, k) for tree in source_forest.trees)
    n = source_forest.n_trees
    return StructureDistribution(k, {s: c / n for s, c in counts.items()}, n)


@dataclass(frozen=True)
class DepthwiseDistribution:
    """``levels[l]`` maps feature -> probability at depth ``l`` (root = 0)."""

    levels: tuple

    def __post_init__(self):
        for level in self.levels:
            if level and abs(sum(level.values()) - 1.0) > 1e-12:
                raise ValueError("each non-empty level must sum to 1")


def build_depthwise_distribution(source_forest: Forest, max_level: int) -> DepthwiseDistribution:
    if max_level < 1:
        raise ValueError("max_level must be >= 1")
    counts = [Counter() for _ in range(max_level)]
    for tree in source_forest.trees:
        for _, depth, node in tree.nodes():
            if depth < max_level and isinstance(node, Internal):
                counts[depth][node.feature_index] += 1
    levels = []
    for c in counts:
        total = sum(c.values())
        levels.append({f: n / total for f, n in sorted(c.items())})
    return DepthwiseDistribution(tuple(levels))


def sample_prototype(dist: StructureDistribution, rng: np.random.Generator) -> StructureSignature:
    support = dist.support()
    probs = np.array([dist.entries[s] for s in support])
    return support[int(rng.choice(len(support), p=probs / probs.sum()))]


@dataclass(frozen=True)
class TransferConfig:
    n_target_trees: int = 500
    k: Optional[int] = 2
    growth: GrowthConfig = field(default_factory=GrowthConfig)
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_target_trees < 1:
            raise ValueError("n_target_trees must be >= 1")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1 or None")

    def tree_growth(self) -> GrowthConfig:
        from dataclasses import replace
        return replace(self.growth, rng_seed=self.rng_seed)


def _prescribed_policy(signature: StructureSignature):
    prescribed = dict(signature.nodes)
    k = signature.k

    def policy(position, depth, rng):
        if k is None:
            return prescribed.get(position, STOP)
        if depth < k:
            return prescribed.get(position, FREE)
        return FREE
    return policy


def fine_tune_tree(signature: StructureSignature, target: Cohort,
                   config: TransferConfig, rng: np.random.Generator,
                   time_grid=None) -> SurvivalTree:
    """Grow a target tree whose top levels split on the signature's features.

    Split values come from the target subjects reaching each node. LEAF
    positions and levels below ``k`` grow freely; an infeasible prescribed
    split truncates the node (``tree.truncated``). With ``k=None`` nothing
    grows beyond the prescribed structure.
    """
    if signature.feature_at(0) == LEAF:
        raise ValueError("signature root must be a split")
    if target.n_subjects == 0:
        raise ValueError("empty target cohort")
    return grow_tree(target, config.growth, rng, time_grid,
                     _prescribed_policy(signature), signature)


def _fit(target, config, make_policy, label):
    grid = event_time_grid(target)
    growth = config.tree_growth()
    trees = grow_trees(target, config.n_target_trees, growth, grid,
                       make_policy, label)
    return Forest(tuple(trees), growth, grid, target.n_features)


def fit_transfer_forest(dist: StructureDistribution, target: Cohort,
                        config: TransferConfig) -> Forest:
    """TSF-T_k: each tree fine-tunes an i.i.d. prototype drawn from ``dist``."""
    if dist.k != config.k:
        raise ValueError(f"distribution has k={dist.k}, config has k={config.k}")

    def make_policy(rng):
        sig = sample_prototype(dist, rng)
        if sig.feature_at(0) == LEAF:
            # a stump in the source carries no structure; grow freely
            return (lambda pos, depth, r: FREE), sig
        return _prescribed_policy(sig), sig
    return _fit(target, config, make_policy, "tsf")


def fit_dp_forest(dp: DepthwiseDistribution, target: Cohort,
                  config: TransferConfig) -> Forest:
    """Per node at depth < K, draw the split feature from that depth's
    source frequencies; empty levels and deeper nodes grow freely."""
    tables = []
    for level in dp.levels:
        feats = np.array(sorted(level), dtype=int)
        probs = np.array([level[f] for f in feats])
        tables.append((feats, probs))

    def policy(position, depth, rng):
        if depth < len(tables) and len(tables[depth][0]):
            feats, probs = tables[depth]
            return int(feats[rng.choice(len(feats), p=probs)])
        return FREE

    return _fit(target, config, lambda rng: (policy, None), "dp")


def fit_transfer_forest_unlimited(source_forest: Forest, target: Cohort,
                                  config: TransferConfig) -> Forest:
    """TSF-T_inf: copy a whole source tree's features, revalue every split on
    target data, and grow nothing beyond the copied structure."""
    signatures = [extract_signature(t, None) for t in source_forest.trees]

    def make_policy(rng):
        sig = signatures[int(rng.integers(len(signatures)))]
        return _prescribed_policy(sig), sig
    return _fit(target, config, make_policy, "tsf-inf")


def prefix_compatible(tree: SurvivalTree, prototype: StructureSignature, k: int):
    """Positions where the tree's top-``k`` structure departs from the prototype
    without an ancestor-or-self truncation to explain it.

    Returns an empty list when the tree is a faithful realization.
    """
    got = dict(extract_signature(tree, k).nodes)
    want = dict(prototype.nodes)
    truncated = set(tree.truncated)

    def explained(pos):
        while True:
            if pos in truncated:
                return True
            if pos == 0:
                return False
            pos = (pos - 1) // 2

    bad = []
    for pos, f in want.items():
        if pos in got:
            if got[pos] != f:
                bad.append(pos)
        elif not explained(pos):
            bad.append(pos)
    return bad
