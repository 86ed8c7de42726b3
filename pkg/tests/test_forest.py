import numpy as np
import pytest

from transurv.core import (Cohort, build_event_table, concordance_td,
                           nelson_aalen, surv_from_cumhaz)
from transurv.forest import (
    Forest, GrowthConfig, Internal, SurvivalTree, Terminal, best_split,
    fit_forest, grow_tree, predict_chf, predict_chf_matrix, predict_risk,
    predict_survival,
)

from oracles import logrank_oracle


def separable_cohort(n=40):
    # feature 0 = 1 for early deaths, 0 for late deaths; feature 1 constant
    rng = np.random.default_rng(0)
    x0 = np.r_[np.ones(n // 2), np.zeros(n // 2)]
    t = np.r_[rng.integers(1, 10, n // 2), rng.integers(20, 30, n // 2)].astype(float)
    e = np.ones(n, dtype=int)
    e[::5] = 0
    return Cohort(np.column_stack([x0, np.full(n, 3.0)]), t, e)


def leaf_curve(tree_node):
    assert isinstance(tree_node, Terminal)
    return tree_node.cum_hazard


CFG = GrowthConfig(min_leaf_size=5, min_split_events=3, mtry=2, bootstrap=False)


def test_best_split_single_subject_is_none():
    c = Cohort([[1.0]], [2.0], [1])
    assert best_split(c, [0], GrowthConfig(min_leaf_size=1, min_split_events=1)) is None


def test_best_split_no_events_is_none():
    c = separable_cohort()
    c0 = Cohort(c.covariates, c.durations, np.zeros(c.n_subjects, dtype=int))
    assert best_split(c0, [0, 1], CFG) is None


def test_best_split_picks_separating_feature():
    c = separable_cohort()
    f, v, stat = best_split(c, [0, 1], CFG)
    assert f == 0 and v == 0.0
    left = c.covariates[:, 0] <= v
    oracle = logrank_oracle((c.durations[left], c.events[left]),
                            (c.durations[~left], c.events[~left]))
    assert stat == pytest.approx(oracle, abs=1e-10)


def test_best_split_tie_break_lowest_feature():
    c = separable_cohort()
    dup = Cohort(np.column_stack([c.covariates[:, 0], c.covariates[:, 0]]),
                 c.durations, c.events)
    assert best_split(dup, [1, 0], CFG)[0] == 0


def test_grow_tree_depth_zero_is_whole_sample_na():
    c = separable_cohort()
    tree = grow_tree(c, GrowthConfig(max_depth=0, bootstrap=False), np.random.default_rng(0))
    na = nelson_aalen(build_event_table(c.durations, c.events))
    assert isinstance(tree.root, Terminal)
    grid = np.unique(c.durations)
    np.testing.assert_array_equal(tree.root.cum_hazard(grid), na(grid))


def test_grow_tree_separable_depth_one():
    c = separable_cohort()
    cfg = GrowthConfig(max_depth=1, min_leaf_size=5, mtry=2, bootstrap=False)
    tree = grow_tree(c, cfg, np.random.default_rng(0))
    root = tree.root
    assert isinstance(root, Internal) and root.feature_index == 0
    left = c.covariates[:, 0] <= root.split_value
    grid = np.unique(c.durations)
    for side, node in ((left, root.left), (~left, root.right)):
        expected = nelson_aalen(build_event_table(c.durations[side], c.events[side]))
        np.testing.assert_array_equal(leaf_curve(node)(grid), expected(grid))


def test_grow_tree_constant_covariates_single_terminal():
    c = separable_cohort()
    const = Cohort(np.ones((c.n_subjects, 2)), c.durations, c.events)
    tree = grow_tree(const, GrowthConfig(min_leaf_size=1, mtry=2), np.random.default_rng(0))
    assert isinstance(tree.root, Terminal)


def signal_cohort(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 4))
    eta = x[:, 0] - x[:, 1]
    t = rng.exponential(np.exp(-eta)) * 10
    cens = rng.exponential(15, size=n)
    return Cohort(x, np.round(np.minimum(t, cens), 2), (t <= cens).astype(int))


def test_forest_single_tree_no_bootstrap_equals_na():
    c = signal_cohort(60, 1)
    f = fit_forest(c, 1, GrowthConfig(max_depth=0, bootstrap=False))
    na = nelson_aalen(build_event_table(c.durations, c.events))
    pred = predict_chf(f, c.covariates[0])
    probe = np.r_[0.0, c.durations, c.durations.max() + 1]
    np.testing.assert_array_equal(pred(probe), na(probe))


def test_forest_determinism():
    c = signal_cohort(150, 2)
    cfg = GrowthConfig(rng_seed=9, min_leaf_size=5)
    a = predict_chf_matrix(fit_forest(c, 10, cfg), c.covariates)
    b = predict_chf_matrix(fit_forest(c, 10, cfg), c.covariates)
    assert np.array_equal(a, b)


def test_forest_threads_do_not_change_result():
    c = signal_cohort(150, 3)
    cfg = GrowthConfig(rng_seed=4, min_leaf_size=5)
    a = predict_chf_matrix(fit_forest(c, 8, cfg), c.covariates)
    b = predict_chf_matrix(fit_forest(c, 8, GrowthConfig(rng_seed=4, min_leaf_size=5, n_jobs=4)),
                           c.covariates)
    assert np.array_equal(a, b)


def test_predict_average_of_trees():
    grid = np.array([1.0, 2.0])
    from transurv.core import StepFunction
    t1 = SurvivalTree(Terminal(StepFunction(grid, [0.2, 0.2]), 5))
    t2 = SurvivalTree(Terminal(StepFunction(grid, [0.4, 0.4]), 5))
    f = Forest((t1, t2), GrowthConfig(), grid, 1)
    assert predict_chf(f, np.array([0.0]))(1.5) == pytest.approx(0.3)
    same = Forest((t1, t1, t1), GrowthConfig(), grid, 1)
    pred = predict_chf(same, np.array([0.0]))
    np.testing.assert_array_equal(pred.knots, t1.root.cum_hazard.knots)
    np.testing.assert_allclose(pred.values, t1.root.cum_hazard.values, rtol=1e-15)
    with pytest.raises(ValueError):
        predict_chf_matrix(f, np.zeros((1, 3)))


def test_predictions_monotone_and_depth_bound():
    c = signal_cohort(300, 5)
    f = fit_forest(c, 10, GrowthConfig(rng_seed=1, max_depth=3, min_leaf_size=5))
    assert all(tree.depth() <= 3 for tree in f.trees)
    chf = predict_chf_matrix(f, c.covariates)
    assert np.all(np.diff(chf, axis=1) >= 0)
    surv = predict_survival(f, c.covariates)
    assert np.all((surv.values >= 0) & (surv.values <= 1))
    assert np.all(np.diff(surv.values, axis=1) <= 0)
    s0 = surv_from_cumhaz(predict_chf(f, c.covariates[0]))
    np.testing.assert_allclose(s0.values, surv.values[0])


def test_permutation_invariance_without_bootstrap():
    c = signal_cohort(120, 6)
    perm = np.random.default_rng(1).permutation(c.n_subjects)
    cfg = GrowthConfig(min_leaf_size=5, mtry=4, bootstrap=False)
    a = fit_forest(c, 1, cfg)
    b = fit_forest(c.subset(perm), 1, cfg)
    assert np.array_equal(predict_chf_matrix(a, c.covariates),
                          predict_chf_matrix(b, c.covariates))


def test_risk_scalar_orders_like_curves():
    c = signal_cohort(200, 8)
    f = fit_forest(c, 5, GrowthConfig(rng_seed=1, min_leaf_size=5))
    r = predict_risk(f, c.covariates)
    np.testing.assert_allclose(r, predict_chf_matrix(f, c.covariates).sum(axis=1))


@pytest.mark.slow
def test_forest_heldout_concordance_on_signal():
    from transurv.harness.synth import SyntheticSpec, generate_cohort
    spec = SyntheticSpec.two_feature(n_subjects=1500, seed=21)
    cohort = generate_cohort(spec)
    train, test = cohort.subset(np.arange(1000)), cohort.subset(np.arange(1000, 1500))
    f = fit_forest(train, 200, GrowthConfig(rng_seed=3))
    assert concordance_td(test, predict_survival(f, test.covariates)) > 0.70
