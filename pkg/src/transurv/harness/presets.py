"""Named experiment settings used by the CLI and the acceptance suite."""
from __future__ import annotations

from ..forest import GrowthConfig
from ..nn import TrainConfig
from .cv import CvPlan
from .experiment import ExperimentConfig
from .methods import ForestSuite, NetworkSuite
from .synth import DomainShift, SyntheticSpec

# Target population: younger, larger tumours, heavier censoring, a 20% longer
# baseline time scale and re-weighted effects (age matters less, BMI and
# marital status more).
SHIFTED = DomainShift(
    baseline_scale=1.2,
    mean_shifts=(-3.0, 0.0, 0.5, 0.0, 0.05, 0.0, 0.0, 0.0),
    censoring_delta=0.201,
    beta_shift=(-0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.8, -0.5),
)

# small targets cannot support leaves of 15 subjects
TARGET_GROWTH = GrowthConfig(min_leaf_size=5, min_split_events=2)


def shifted_pair_spec(seed: int, n_source: int = 5000, n_target: int = 3000) -> SyntheticSpec:
    return SyntheticSpec(n_subjects=n_source, n_target=n_target, shift=SHIFTED, rng_seed=seed)


def trend_config(sizes=(500, 200, 80, 40, 20), n_trees: int = 50, n_folds: int = 5,
                 max_folds=None, n_jobs: int = 1) -> ExperimentConfig:
    nets = tuple(NetworkSuite(kind=k, target_config=TrainConfig(learning_rate=0.01, epochs=50,
                                                                batch_size=32))
                 for k in ("deepsurv", "coxcc", "deephit"))
    return ExperimentConfig(
        plan=CvPlan(n_folds=n_folds, sizes=tuple(sizes), max_folds=max_folds),
        forest=ForestSuite(n_source_trees=n_trees, n_target_trees=n_trees,
                           target_growth=TARGET_GROWTH),
        networks=nets, n_jobs=n_jobs)


def miniature_config(n_jobs: int = 1) -> ExperimentConfig:
    """A grid small enough for determinism checks and smoke runs."""
    nets = tuple(NetworkSuite(kind=k, hidden=(8,),
                              pretrain_config=TrainConfig(epochs=3, batch_size=256),
                              target_config=TrainConfig(epochs=5, batch_size=32))
                 for k in ("deepsurv", "coxcc", "deephit"))
    return ExperimentConfig(
        plan=CvPlan(n_folds=5, sizes=("full", 100, 40), max_folds=2),
        forest=ForestSuite(n_source_trees=8, n_target_trees=8, target_growth=TARGET_GROWTH),
        networks=nets, n_jobs=n_jobs)
