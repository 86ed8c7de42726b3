import numpy as np
import pytest
from scipy import stats

from transurv.core import Cohort, StepFunction, build_event_table, nelson_aalen
from transurv.forest import (Forest, GrowthConfig, Internal, SurvivalTree,
                             Terminal, fit_forest, predict_chf_matrix)
from transurv.tsf import (
    LEAF, DepthwiseDistribution, StructureDistribution, StructureSignature,
    TransferConfig, build_depthwise_distribution, build_structure_distribution,
    extract_signature, fine_tune_tree, fit_dp_forest, fit_transfer_forest,
    fit_transfer_forest_unlimited, prefix_compatible, sample_prototype,
)

LEAFNODE = Terminal(StepFunction([], []), 1)


def node(f, left=LEAFNODE, right=LEAFNODE, v=0.0):
    return Internal(f, v, left, right)


def forest_of(*roots):
    return Forest(tuple(SurvivalTree(r) for r in roots), GrowthConfig(), [1.0], 5)


def cohort(n, seed, p=4, binary0=False):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    if binary0:
        x[:, 0] = rng.integers(0, 2, n)
    eta = 1.5 * x[:, 0] - x[:, 1]
    t = rng.exponential(np.exp(-eta)) * 10
    c = rng.exponential(20, n)
    return Cohort(x, np.round(np.minimum(t, c), 2), (t <= c).astype(int))


def test_extract_signature_examples():
    assert extract_signature(SurvivalTree(LEAFNODE), 2).positions() == [LEAF] * 3
    assert extract_signature(SurvivalTree(node(3)), 2).positions() == [3, LEAF, LEAF]
    a = SurvivalTree(node(0, node(1, node(2)), node(4)))
    b = SurvivalTree(node(0, node(1, node(3, node(2))), node(4, right=node(1))))
    assert extract_signature(a, 2) == extract_signature(b, 2)
    assert extract_signature(a, 3) != extract_signature(b, 3)
    with pytest.raises(ValueError):
        extract_signature(a, 0)


def test_signature_is_positional():
    left_heavy = SurvivalTree(node(0, node(1)))
    right_heavy = SurvivalTree(node(0, right=node(1)))
    assert extract_signature(left_heavy, 2) != extract_signature(right_heavy, 2)


def test_signature_leaf_invariant():
    with pytest.raises(ValueError):
        StructureSignature(2, ((1, 3),))


def test_structure_distribution_counts():
    a = node(0, node(1))
    b = node(2)
    d = build_structure_distribution(forest_of(*[a] * 10), 2)
    assert list(d.entries.values()) == [1.0]
    d = build_structure_distribution(forest_of(a, a, a, b), 2)
    sa = extract_signature(SurvivalTree(a), 2)
    sb = extract_signature(SurvivalTree(b), 2)
    assert d.entries == {sa: 0.75, sb: 0.25}
    assert d.source_n_trees == 4


def test_depthwise_distribution_counts():
    d = build_depthwise_distribution(forest_of(*[node(2)] * 10), 2)
    assert d.levels[0] == {2: 1.0}
    assert d.levels[1] == {}
    d = build_depthwise_distribution(
        forest_of(node(3, node(0), node(1)), node(3, node(0), node(1))), 2)
    assert d.levels[1] == {0: 0.5, 1: 0.5}


def test_sample_prototype():
    a = StructureSignature(2, ((0, 0),))
    b = StructureSignature(2, ((0, 1),))
    single = StructureDistribution(2, {a: 1.0}, 1)
    rng = np.random.default_rng(0)
    assert all(sample_prototype(single, rng) == a for _ in range(20))
    d = StructureDistribution(2, {a: 0.75, b: 0.25}, 4)
    rng = np.random.default_rng(1)
    draws = [sample_prototype(d, rng) for _ in range(10_000)]
    freq = sum(s == a for s in draws) / 10_000
    assert 0.73 <= freq <= 0.77
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    assert [sample_prototype(d, r1) for _ in range(50)] == [sample_prototype(d, r2) for _ in range(50)]


def test_sampling_ignores_insertion_order():
    a = StructureSignature(2, ((0, 0),))
    b = StructureSignature(2, ((0, 1),))
    d1 = StructureDistribution(2, {a: 0.6, b: 0.4}, 5)
    d2 = StructureDistribution(2, {b: 0.4, a: 0.6}, 5)
    r1, r2 = np.random.default_rng(2), np.random.default_rng(2)
    assert [sample_prototype(d1, r1) for _ in range(30)] == [sample_prototype(d2, r2) for _ in range(30)]


def test_fine_tune_binary_root():
    rng = np.random.default_rng(3)
    x = np.column_stack([np.r_[np.zeros(5), np.ones(5)], rng.normal(size=10)])
    t = np.array([5, 6, 7, 8, 9, 1, 2, 3, 4, 4.5])
    e = np.array([1, 0, 1, 1, 1, 1, 1, 0, 1, 1])
    target = Cohort(x, t, e)
    growth = GrowthConfig(max_depth=1, min_leaf_size=2, min_split_events=2, bootstrap=False)
    sig = StructureSignature.from_positions([0, LEAF, LEAF])
    tree = fine_tune_tree(sig, target, TransferConfig(1, 2, growth), rng)
    assert isinstance(tree.root, Internal)
    assert tree.root.feature_index == 0 and tree.root.split_value == 0.0
    grid = np.unique(t)
    for side, child in ((x[:, 0] <= 0, tree.root.left), (x[:, 0] > 0, tree.root.right)):
        want = nelson_aalen(build_event_table(t[side], e[side]))
        np.testing.assert_array_equal(child.cum_hazard(grid), want(grid))


def test_fine_tune_constant_feature_truncates():
    c = cohort(80, 1)
    x = c.covariates.copy()
    x[:, 2] = 7.0
    target = Cohort(x, c.durations, c.events)
    sig = StructureSignature.from_positions([2, LEAF, LEAF])
    tree = fine_tune_tree(sig, target, TransferConfig(1, 2, GrowthConfig(min_leaf_size=5)),
                          np.random.default_rng(0))
    assert isinstance(tree.root, Terminal)
    assert tree.truncated == (0,)
    grid = np.unique(c.durations)
    want = nelson_aalen(build_event_table(c.durations, c.events))
    np.testing.assert_array_equal(tree.root.cum_hazard(grid), want(grid))


def test_fine_tune_k1_deeper_levels_free():
    target = cohort(400, 2)
    sig = StructureSignature.from_positions([3])
    growth = GrowthConfig(max_depth=3, min_leaf_size=5, mtry=4)
    seen = set()
    for s in range(10):
        tree = fine_tune_tree(sig, target, TransferConfig(1, 1, growth), np.random.default_rng(s))
        assert tree.root.feature_index == 3
        assert tree.depth() <= 3
        seen |= {n.feature_index for p, d, n in tree.nodes() if d > 0 and isinstance(n, Internal)}
    assert len(seen) > 1


def test_fine_tune_rejects_leaf_root_and_empty():
    with pytest.raises(ValueError):
        fine_tune_tree(StructureSignature(2, ()), cohort(10, 0), TransferConfig(), np.random.default_rng(0))


def test_transfer_forest_structure_in_support():
    source = cohort(600, 3)
    target = cohort(300, 4)
    sf = fit_forest(source, 20, GrowthConfig(rng_seed=1, min_leaf_size=10))
    dist = build_structure_distribution(sf, 2)
    cfg = TransferConfig(30, 2, GrowthConfig(min_leaf_size=5), rng_seed=7)
    tf = fit_transfer_forest(dist, target, cfg)
    assert tf.n_trees == 30
    for tree in tf.trees:
        assert tree.prototype in dist.entries
        assert prefix_compatible(tree, tree.prototype, 2) == []


def test_transfer_forest_single_tree_deterministic():
    source = cohort(300, 5)
    target = cohort(150, 6)
    dist = build_structure_distribution(fit_forest(source, 5, GrowthConfig(min_leaf_size=10)), 2)
    cfg = TransferConfig(1, 2, GrowthConfig(min_leaf_size=5), rng_seed=3)
    a = fit_transfer_forest(dist, target, cfg)
    b = fit_transfer_forest(dist, target, cfg)
    assert a.n_trees == 1
    assert np.array_equal(predict_chf_matrix(a, target.covariates),
                          predict_chf_matrix(b, target.covariates))


def test_split_values_depend_only_on_target():
    # two different source forests with the same structure distribution
    target = cohort(200, 7)
    f1 = forest_of(node(0, node(1), v=0.3), node(1, v=2.0))
    f2 = forest_of(node(1, v=-5.0), node(0, node(1, v=9.0), v=1.0))
    d1 = build_structure_distribution(f1, 2)
    d2 = build_structure_distribution(f2, 2)
    assert d1.entries == d2.entries
    cfg = TransferConfig(10, 2, GrowthConfig(min_leaf_size=5), rng_seed=11)
    a = fit_transfer_forest(d1, target, cfg)
    b = fit_transfer_forest(d2, target, cfg)
    assert np.array_equal(predict_chf_matrix(a, target.covariates),
                          predict_chf_matrix(b, target.covariates))


def test_dp_forest_fixed_root():
    dp = DepthwiseDistribution(({2: 1.0}, {}))
    target = cohort(200, 8)
    f = fit_dp_forest(dp, target, TransferConfig(20, 2, GrowthConfig(min_leaf_size=5), 1))
    assert all(t.root.feature_index == 2 for t in f.trees)


def test_dp_forest_empty_level_grows_freely():
    dp = DepthwiseDistribution(({},))
    target = cohort(300, 9)
    f = fit_dp_forest(dp, target, TransferConfig(10, 1, GrowthConfig(min_leaf_size=5, mtry=4), 1))
    assert all(isinstance(t.root, Internal) for t in f.trees)
    assert all(t.truncated == () for t in f.trees)


@pytest.mark.slow
def test_dp_uniform_root_frequencies():
    rng = np.random.default_rng(0)
    n, p = 200, 4
    x = rng.normal(size=(n, p))
    t = np.round(rng.exponential(10, n), 2)
    e = np.ones(n, dtype=int)
    target = Cohort(x, t, e)
    dp = DepthwiseDistribution(({f: 0.25 for f in range(p)},))
    growth = GrowthConfig(max_depth=1, min_leaf_size=5, min_split_events=1)
    f = fit_dp_forest(dp, target, TransferConfig(1000, 1, growth, 5))
    roots = [tr.root.feature_index for tr in f.trees]
    counts = np.bincount(roots, minlength=p)
    assert stats.chisquare(counts).pvalue > 0.001


def test_unlimited_single_source_tree():
    src = forest_of(node(0, node(1), node(2, node(3))))
    target = cohort(600, 10)
    f = fit_transfer_forest_unlimited(src, target,
                                      TransferConfig(8, None, GrowthConfig(min_leaf_size=5), 2))
    want = dict(extract_signature(src.trees[0], None).nodes)
    for tree in f.trees:
        got = dict(extract_signature(tree, None).nodes)
        assert set(got) <= set(want)
        assert all(want[p] == fv for p, fv in got.items())
        assert prefix_compatible(tree, tree.prototype, 10) == []


def test_unlimited_constant_root_feature_collapses():
    src = forest_of(node(2, node(1)), node(2))
    c = cohort(200, 11)
    x = c.covariates.copy()
    x[:, 2] = 0.0
    target = Cohort(x, c.durations, c.events)
    f = fit_transfer_forest_unlimited(src, target,
                                      TransferConfig(6, None, GrowthConfig(min_leaf_size=5), 2))
    assert all(isinstance(t.root, Terminal) for t in f.trees)


def test_unlimited_self_transfer_root_split_close():
    data = cohort(3000, 12, binary0=False)
    sf = fit_forest(data, 10, GrowthConfig(rng_seed=2, min_leaf_size=15, bootstrap=False, mtry=4))
    src_tree = sf.trees[0]
    tf = fit_transfer_forest_unlimited(
        sf, data, TransferConfig(5, None, GrowthConfig(min_leaf_size=15, bootstrap=False), 3))
    # no bootstrap on either side: the root is re-optimized on the same data
    for tree in tf.trees:
        assert tree.root.feature_index == src_tree.root.feature_index
        assert tree.root.split_value == src_tree.root.split_value


def test_unlimited_self_transfer_root_drift_with_bootstrap():
    # step effect at x0 = 0 gives the log-rank criterion a sharp optimum
    rng = np.random.default_rng(13)
    n = 3000
    x = rng.normal(size=(n, 4))
    t = rng.exponential(np.exp(-2.0 * (x[:, 0] > 0))) * 10
    cens = rng.exponential(20, n)
    data = Cohort(x, np.round(np.minimum(t, cens), 2), (t <= cens).astype(int))
    sf = fit_forest(data, 10, GrowthConfig(rng_seed=4, min_leaf_size=15, mtry=4))
    tf = fit_transfer_forest_unlimited(
        sf, data, TransferConfig(20, None, GrowthConfig(min_leaf_size=15), 5))
    sources = {extract_signature(t, None): t for t in sf.trees}
    cand = np.quantile(x[:, 0], np.arange(1, 11) / 11)
    spacing = np.max(np.diff(cand[3:7]))
    for tree in tf.trees:
        src = sources[tree.prototype]
        assert src.root.feature_index == 0
        assert tree.root.feature_index == 0
        assert abs(tree.root.split_value - src.root.split_value) <= spacing
