"""Method factories for the experiment grid.

A factory turns ``(training cohort, seed)`` into a predictor mapping raw
covariates to a :class:`~transurv.core.CurveBatch`. Methods that ignore the
target training data (the source-only models) are flagged so the grid
scores them once per fold.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from ..core import Cohort, CurveBatch
from ..forest import Forest, GrowthConfig, fit_forest, predict_survival
from ..nn import SurvivalNetwork, TrainConfig, predict_curves
from ..transfer_nn import Mode, TransferProtocol, adapt, pretrain
from ..tsf import (TransferConfig, build_depthwise_distribution,
                   build_structure_distribution, fit_dp_forest,
                   fit_transfer_forest, fit_transfer_forest_unlimited)


@dataclass(frozen=True)
class Method:
    name: str
    factory: Callable
    uses_training: bool = True


def forest_predictor(forest: Forest):
    return lambda x: predict_survival(forest, x)


def network_predictor(net: SurvivalNetwork):
    return lambda x: predict_curves(net, x)


def constant_method(name="Constant") -> Method:
    def factory(train, seed):
        return lambda x: CurveBatch([1.0], np.full((len(np.atleast_2d(x)), 1), 0.5))
    return Method(name, factory)


def rsf_method(n_trees: int, growth: GrowthConfig, name="Target") -> Method:
    def factory(train, seed):
        return forest_predictor(fit_forest(train, n_trees, replace(growth, rng_seed=seed)))
    return Method(name, factory)


def fixed_method(predictor, name="Source") -> Method:
    return Method(name, lambda train, seed: predictor, uses_training=False)


def tsf_method(source: Forest, k: Optional[int], n_trees: int, growth: GrowthConfig,
               name: Optional[str] = None) -> Method:
    dist = build_structure_distribution(source, k) if k is not None else None

    def factory(train, seed):
        cfg = TransferConfig(n_trees, k, growth, seed)
        if k is None:
            return forest_predictor(fit_transfer_forest_unlimited(source, train, cfg))
        return forest_predictor(fit_transfer_forest(dist, train, cfg))
    return Method(name or f"TSF-T{'inf' if k is None else k}", factory)


def dp_method(source: Forest, levels: int, n_trees: int, growth: GrowthConfig,
              name="DP") -> Method:
    dp = build_depthwise_distribution(source, levels)

    def factory(train, seed):
        return forest_predictor(fit_dp_forest(dp, train, TransferConfig(n_trees, None, growth, seed)))
    return Method(name, factory)


def network_method(pretrained: SurvivalNetwork, mode, config: TrainConfig,
                   name: Optional[str] = None, refit_baseline: bool = True) -> Method:
    mode = Mode(mode)

    def factory(train, seed):
        protocol = TransferProtocol(mode, replace(config, rng_seed=seed), refit_baseline)
        return network_predictor(adapt(pretrained, train, protocol))
    labels = {Mode.SOURCE_ONLY: "Source", Mode.FINE_TUNE: "FT", Mode.RETRAIN: "RT",
              Mode.TARGET_ONLY: "Target"}
    return Method(name or labels[mode], factory, uses_training=mode is not Mode.SOURCE_ONLY)


@dataclass(frozen=True)
class ForestSuite:
    """Forest-family experiment settings (source forest plus target methods)."""

    n_source_trees: int = 100
    n_target_trees: int = 100
    source_growth: GrowthConfig = GrowthConfig()
    target_growth: GrowthConfig = GrowthConfig()
    ks: tuple = (1, 2, None)
    dp_levels: int = 2
    include_dp: bool = True
    seed: int = 0

    def fit_source(self, source: Cohort) -> Forest:
        return fit_forest(source, self.n_source_trees, replace(self.source_growth, rng_seed=self.seed))

    def methods(self, source_forest: Forest) -> list:
        out = [rsf_method(self.n_target_trees, self.target_growth),
               fixed_method(forest_predictor(source_forest))]
        out += [tsf_method(source_forest, k, self.n_target_trees, self.target_growth)
                for k in self.ks]
        if self.include_dp:
            out.append(dp_method(source_forest, self.dp_levels, self.n_target_trees,
                                 self.target_growth))
        return out


@dataclass(frozen=True)
class NetworkSuite:
    """Network-family settings for one loss kind."""

    kind: str = "deepsurv"
    hidden: tuple = (32,)
    n_bins: int = 10
    pretrain_config: TrainConfig = TrainConfig(learning_rate=0.01, epochs=20, batch_size=128)
    target_config: TrainConfig = TrainConfig(learning_rate=0.01, epochs=50, batch_size=32)
    target_only_config: Optional[TrainConfig] = None
    refit_baseline: bool = True
    seed: int = 0

    def fit_source(self, source: Cohort) -> SurvivalNetwork:
        return pretrain(source, self.kind, replace(self.pretrain_config, rng_seed=self.seed),
                        self.hidden, self.n_bins)

    def methods(self, pretrained: SurvivalNetwork) -> list:
        cfg = self.target_config
        return [network_method(pretrained, Mode.TARGET_ONLY, self.target_only_config or cfg,
                               refit_baseline=self.refit_baseline),
                network_method(pretrained, Mode.SOURCE_ONLY, cfg),
                network_method(pretrained, Mode.FINE_TUNE, cfg, refit_baseline=self.refit_baseline),
                network_method(pretrained, Mode.RETRAIN, cfg, refit_baseline=self.refit_baseline)]
