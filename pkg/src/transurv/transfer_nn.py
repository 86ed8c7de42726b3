"""Transfer protocols for survival networks.

A network pretrained on the source cohort is used as is (``SOURCE_ONLY``),
has only its output layer re-optimized on the target (``FINE_TUNE``), has all
parameters re-optimized starting from the pretrained values (``RETRAIN``), or
is replaced by a freshly initialized network trained on the target alone
(``TARGET_ONLY``).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import Cohort
from .nn import (DiscreteTimeGrid, Standardizer, SurvivalNetwork, TrainConfig,
                 fit_breslow, init_network, train)
from .seeding import rng_for


class Mode(str, enum.Enum):
    SOURCE_ONLY = "source"
    FINE_TUNE = "ft"
    RETRAIN = "rt"
    TARGET_ONLY = "target"


@dataclass(frozen=True)
class TransferProtocol:
    mode: Mode
    target_train_config: TrainConfig = field(default_factory=TrainConfig)
    refit_baseline: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))


def _layer_sizes(net: SurvivalNetwork) -> list:
    return [net.weights[0].shape[0]] + [w.shape[1] for w in net.weights]


def _finish(net: SurvivalNetwork, cohort: Cohort) -> SurvivalNetwork:
    if net.kind != "deephit" and np.any(cohort.events == 1):
        net.baseline = fit_breslow(net, cohort)
    return net


def pretrain(source: Cohort, kind: str, config: TrainConfig, hidden=(32,),
             n_bins: int = 10) -> SurvivalNetwork:
    """Train a network on the source cohort.

    Covariates are standardized with source statistics; DeepHit gets an
    equal-quantile grid of source durations and Cox kinds a Breslow baseline.
    """
    scaler = Standardizer.fit(source.covariates)
    grid = DiscreteTimeGrid.from_durations(source.durations, n_bins) if kind == "deephit" else None
    net = init_network(source.n_features, kind, hidden=hidden,
                       rng=rng_for(config.rng_seed, "init", 0), scaler=scaler, grid=grid)
    net, _ = train(net, source, config)
    return _finish(net, source)


def adapt(pretrained: SurvivalNetwork, target: Cohort,
          protocol: TransferProtocol) -> SurvivalNetwork:
    """Apply the protocol's mode to the target training cohort.

    Source standardization and the DeepHit grid are kept for FINE_TUNE and
    RETRAIN; the Cox baseline is refit on the target for every mode except
    SOURCE_ONLY (unless ``refit_baseline`` is off).
    """
    if target.n_features != pretrained.n_features:
        raise ValueError(f"network expects {pretrained.n_features} features, "
                         f"target has {target.n_features}")
    mode = protocol.mode
    cfg = protocol.target_train_config
    if mode is Mode.SOURCE_ONLY:
        return pretrained
    if mode is Mode.TARGET_ONLY:
        sizes = _layer_sizes(pretrained)
        grid = None
        if pretrained.kind == "deephit":
            grid = DiscreteTimeGrid.from_durations(target.durations, sizes[-1])
        net = init_network(target.n_features, pretrained.kind, hidden=tuple(sizes[1:-1]),
                           rng=rng_for(cfg.rng_seed, "init", 1),
                           scaler=Standardizer.fit(target.covariates), grid=grid)
        net.activation = pretrained.activation
        net, _ = train(net, target, cfg)
        return _finish(net, target)
    trainable = "output" if mode is Mode.FINE_TUNE else "all"
    net, _ = train(pretrained, target, cfg, trainable=trainable)
    if protocol.refit_baseline:
        return _finish(net, target)
    return net
