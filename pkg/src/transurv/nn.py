"""Feed-forward survival networks: DeepSurv, Cox-CC and DeepHit.

Networks are plain numpy weight lists trained by mini-batch gradient descent
with hand-written backpropagation. The last layer is the *output layer*;
everything before it is the *hidden stack* (frozen by fine-tuning).
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CurveBatch, StepFunction, build_event_table

KINDS = ("deepsurv", "coxcc", "deephit")
PROB_FLOOR = 1e-12


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"diverged at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x) -> "Standardizer":
        x = np.asarray(x, float)
        sd = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(sd > 0, sd, 1.0))

    @classmethod
    def identity(cls, n_features: int) -> "Standardizer":
        return cls(np.zeros(n_features), np.ones(n_features))

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, float) - self.mean) / self.scale


@dataclass(frozen=True, eq=False)
class DiscreteTimeGrid:
    """Cut points ``0 = tau_0 < tau_1 < ... < tau_m``.

    Bin ``k`` (1-based) is ``(tau_{k-1}, tau_k]``; events past ``tau_m`` fall
    in bin ``m``. Censored times map *down* to the last cut they survived,
    capped at ``tau_{m-1}`` so a censored subject never needs ``S(tau_m) = 0``.
    """

    cuts: np.ndarray

    def __post_init__(self):
        c = np.array(self.cuts, dtype=float)
        if c[0] != 0 or np.any(np.diff(c) <= 0) or len(c) < 2:
            raise ValueError("cuts must start at 0 and increase strictly")
        c.setflags(write=False)
        object.__setattr__(self, "cuts", c)

    @property
    def m(self) -> int:
        return len(self.cuts) - 1

    @classmethod
    def from_durations(cls, durations, m: int = 10) -> "DiscreteTimeGrid":
        t = np.asarray(durations, float)
        q = np.quantile(t, np.arange(1, m + 1) / m)
        cuts = np.unique(np.r_[0.0, q[q > 0]])
        return cls(cuts)

    def event_bin(self, t) -> np.ndarray:
        """1-based ``e`` with ``tau_{e-1} < t <= tau_e`` (tail -> m)."""
        e = np.searchsorted(self.cuts, np.asarray(t, float), side="left")
        return np.clip(e, 1, self.m)

    def censor_cut(self, t) -> np.ndarray:
        """Largest ``k <= m - 1`` with ``tau_k <= t``."""
        k = np.searchsorted(self.cuts, np.asarray(t, float), side="right") - 1
        return np.clip(k, 0, self.m - 1)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: Optional[int] = None
    rng_seed: int = 0
    control_size: int = 1
    sigma: float = 0.1
    alpha: float = 0.2
    optimizer: str = "momentum"
    momentum: float = 0.9

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.optimizer not in ("sgd", "momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.control_size < 1:
            raise ValueError("control_size must be >= 1")


@dataclass(eq=False)
class SurvivalNetwork:
    """Layer weights ``W[l]`` of shape ``(fan_in, fan_out)`` and biases.

    ``kind`` selects the head: ``deepsurv``/``coxcc`` emit one log-risk score,
    ``deephit`` emits ``grid.m`` probabilities through a softmax.
    """

    weights: list
    biases: list
    kind: str
    activation: str = "relu"
    scaler: Optional[Standardizer] = None
    grid: Optional[DiscreteTimeGrid] = None
    baseline: Optional[StepFunction] = None

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    def hidden_parameters(self) -> list:
        return [a for pair in zip(self.weights[:-1], self.biases[:-1]) for a in pair]

    def output_parameters(self) -> list:
        return [self.weights[-1], self.biases[-1]]

    def parameters(self) -> list:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self) -> "SurvivalNetwork":
        return copy.deepcopy(self)


def init_network(n_features: int, kind: str, hidden=(32,), n_bins: int = 1,
                 rng=None, scaler=None, grid=None) -> SurvivalNetwork:
    if kind not in KINDS:
        raise ValueError(f"unknown network kind {kind!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    n_out = grid.m if (kind == "deephit" and grid is not None) else (
        n_bins if kind == "deephit" else 1)
    sizes = [n_features, *hidden, n_out]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return SurvivalNetwork(weights, biases, kind, scaler=scaler, grid=grid)


def _act(z, name):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(z, a, name):
    if name == "relu":
        return (z > 0).astype(float)
    return 1.0 - a ** 2


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def _forward(net, x):
    acts = [x]
    pre = []
    h = x
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if l == last else _act(z, net.activation)
        acts.append(h)
    out = _softmax(h) if net.kind == "deephit" else h[:, 0]
    return out, (acts, pre)


def forward(net: SurvivalNetwork, x) -> np.ndarray:
    """Scores ``theta`` (Cox kinds) or bin probabilities (DeepHit).

    ``x`` is already standardized; a single vector gives a single output.
    """
    x = np.asarray(x, float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != net.n_features:
        raise ValueError(f"expected {net.n_features} inputs, got {x2.shape[1]}")
    out, _ = _forward(net, x2)
    return out[0] if single else out


def _backward(net, cache, grad_out, out):
    acts, pre = cache
    if net.kind == "deephit":
        g = out * (grad_out - np.sum(grad_out * out, axis=1, keepdims=True))
    else:
        g = grad_out[:, None]
    gw = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    for l in range(len(net.weights) - 1, -1, -1):
        gw[l] = acts[l].T @ g
        gb[l] = g.sum(axis=0)
        if l > 0:
            g = (g @ net.weights[l].T) * _act_grad(pre[l - 1], acts[l], net.activation)
    return gw, gb


# ---------------------------------------------------------------- Cox losses

def _group_last(sorted_t):
    """Index of the last element of each run of equal values."""
    n = len(sorted_t)
    ends = np.flatnonzero(np.r_[sorted_t[1:] != sorted_t[:-1], True])
    run = np.repeat(ends, np.diff(np.r_[-1, ends]))
    return run[:n]


def cox_nll(theta, durations, events, return_grad=False):
    """Negative log partial likelihood with Breslow ties.

    ``sum over events i of [log sum_{j: T_j >= T_i} exp(theta_j) - theta_i]``.
    """
    theta = np.asarray(theta, float)
    t = np.asarray(durations, float)
    e = np.asarray(events) == 1
    if not np.any(e):
        raise ValueError("no events")
    desc = np.argsort(-t, kind="stable")
    lse_desc = np.logaddexp.accumulate(theta[desc])[_group_last(-t[desc])]
    lse = np.empty_like(theta)
    lse[desc] = lse_desc
    loss = float(np.sum(lse[e] - theta[e]))
    if not return_grad:
        return loss
    asc = np.argsort(t, kind="stable")
    a = np.where(e, -lse, -np.inf)[asc]
    cum = np.logaddexp.accumulate(a)[_group_last(t[asc])]
    acc = np.empty_like(theta)
    acc[asc] = cum
    grad = np.exp(theta + acc) - e
    return loss, grad


def _coxcc_controls(t, e, control_size, rng):
    """Per event: (event index, control indices drawn from R_i minus i)."""
    n = len(t)
    asc = np.argsort(t, kind="stable")
    pos = np.empty(n, dtype=int)
    pos[asc] = np.arange(n)
    ev = np.flatnonzero(e)
    first = np.searchsorted(t[asc], t[ev], side="left")
    n_cand = n - first - 1
    u = rng.random((len(ev), control_size))
    r = np.floor(u * n_cand[:, None]).astype(int)
    slot = first[:, None] + r
    slot = slot + (slot >= pos[ev][:, None])
    slot = np.minimum(slot, n - 1)
    return ev, asc[slot], n_cand


def coxcc_nll(theta, durations, events, control_size, rng, exhaustive=False,
              return_grad=False):
    """Case-control partial likelihood.

    Each event ``i`` compares against ``control_size`` controls drawn
    uniformly with replacement from its risk set without ``i``:
    ``log(exp(theta_i) + sum_c exp(theta_c)) - theta_i``. An event with no
    other subject at risk contributes zero. ``exhaustive=True`` replaces the
    draw with the full risk set (then equal to :func:`cox_nll`).
    """
    theta = np.asarray(theta, float)
    t = np.asarray(durations, float)
    e = np.asarray(events) == 1
    if control_size < 1:
        raise ValueError("control_size must be >= 1")
    grad = np.zeros_like(theta)
    if exhaustive:
        loss = 0.0
        for i in np.flatnonzero(e):
            risk = np.flatnonzero(t >= t[i])
            z = theta[risk]
            zmax = z.max()
            lse = zmax + np.log(np.sum(np.exp(z - zmax)))
            loss += lse - theta[i]
            if return_grad:
                grad[risk] += np.exp(z - lse)
                grad[i] -= 1.0
        return (float(loss), grad) if return_grad else float(loss)
    ev, ctrl, n_cand = _coxcc_controls(t, e, control_size, rng)
    active = n_cand > 0
    ev, ctrl = ev[active], ctrl[active]
    if len(ev) == 0:
        return (0.0, grad) if return_grad else 0.0
    diff = theta[ctrl] - theta[ev][:, None]
    z = np.column_stack([np.zeros(len(ev)), diff])
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.sum(np.exp(z - zmax), axis=1))
    loss = float(np.sum(lse))
    if not return_grad:
        return loss
    p = np.exp(z - lse[:, None])
    np.add.at(grad, ev, -(1.0 - p[:, 0]))
    np.add.at(grad, ctrl.ravel(), p[:, 1:].ravel())
    return loss, grad


# ------------------------------------------------------------- DeepHit losses

def _surv_at(y, k):
    """``S(tau_k) = 1 - sum_{kappa <= k} y_kappa`` per subject; k = 0 -> 1."""
    cum = np.concatenate((np.zeros((len(y), 1)), np.cumsum(y, axis=1)), axis=1)
    return 1.0 - cum[np.arange(len(y)), k]


def deephit_likelihood(y, grid: DiscreteTimeGrid, durations, events, return_grad=False):
    y = np.asarray(y, float)
    t = np.asarray(durations, float)
    e = np.asarray(events) == 1
    ebin = grid.event_bin(t) - 1
    ccut = grid.censor_cut(t)
    rows = np.arange(len(y))
    p_event = y[rows, ebin]
    s_cens = _surv_at(y, ccut)
    p = np.where(e, p_event, s_cens)
    loss = float(-np.sum(np.log(np.maximum(p, PROB_FLOOR))))
    if not return_grad:
        return loss
    grad = np.zeros_like(y)
    live = p > PROB_FLOOR
    ev = e & live
    grad[rows[ev], ebin[ev]] = -1.0 / p_event[ev]
    cs = ~e & live
    upto = np.arange(y.shape[1])[None, :] < ccut[:, None]
    grad += np.where(cs[:, None] & upto, 1.0 / np.where(cs, s_cens, 1.0)[:, None], 0.0)
    return loss, grad


def deephit_rank(y, grid: DiscreteTimeGrid, durations, events, sigma, return_grad=False):
    """Pairwise ranking loss ``sum delta_i 1{T_i < T_j} exp((S_i(T_i) - S_j(T_i)) / sigma)``.

    ``S(T_i)`` is read at the cut closing ``T_i``'s event bin, the same point
    the likelihood uses.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    y = np.asarray(y, float)
    t = np.asarray(durations, float)
    e = np.asarray(events) == 1
    k = grid.event_bin(t)
    cum = np.concatenate((np.zeros((len(y), 1)), np.cumsum(y, axis=1)), axis=1)
    s = 1.0 - cum[:, k].T          # s[i, j] = S_j(tau_{e_i})
    own = np.diag(s)
    pairs = e[:, None] & (t[:, None] < t[None, :])
    w = np.where(pairs, np.exp((own[:, None] - s) / sigma), 0.0)
    loss = float(w.sum())
    if not return_grad:
        return loss
    upto = (np.arange(y.shape[1])[None, :] < k[:, None]).astype(float)
    grad = (-w.sum(axis=1)[:, None] * upto + w.T @ upto) / sigma
    return loss, grad


def deephit_loss(y, grid, durations, events, alpha, sigma, return_grad=False):
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not return_grad:
        return (alpha * deephit_likelihood(y, grid, durations, events)
                + (1 - alpha) * deephit_rank(y, grid, durations, events, sigma))
    ll, gl = deephit_likelihood(y, grid, durations, events, return_grad=True)
    lr, gr = deephit_rank(y, grid, durations, events, sigma, return_grad=True)
    return alpha * ll + (1 - alpha) * lr, alpha * gl + (1 - alpha) * gr


# ------------------------------------------------------------------ training

def batch_objective(net, x, t, e, config: TrainConfig, rng=None):
    """Training objective summed over the batch and its output gradient.

    For DeepHit the ranking sum is divided by the batch size before mixing.
    """
    out, cache = _forward(net, x)
    if net.kind == "deepsurv":
        if not np.any(e == 1):
            return 0.0, np.zeros_like(out), out, cache
        loss, g = cox_nll(out, t, e, return_grad=True)
    elif net.kind == "coxcc":
        loss, g = coxcc_nll(out, t, e, config.control_size, rng, return_grad=True)
    else:
        # the ranking sum has O(n^2) terms; scale it to a per-subject figure
        # so both parts of the mixture contribute on the same footing
        n = len(t)
        ll, gl = deephit_likelihood(out, net.grid, t, e, return_grad=True)
        lr, gr = deephit_rank(out, net.grid, t, e, config.sigma, return_grad=True)
        a = config.alpha
        loss, g = a * ll + (1 - a) * lr / n, a * gl + (1 - a) * gr / n
    return loss, g, out, cache


def loss_and_gradients(net, x, t, e, config: TrainConfig, rng=None):
    """Mean batch loss and its gradient for every parameter.

    Returns ``(loss, [dW_0, db_0, dW_1, db_1, ...])``.
    """
    n = len(t)
    loss, g, out, cache = batch_objective(net, x, t, e, config, rng)
    gw, gb = _backward(net, cache, g / n, out)
    return loss / n, [a for pair in zip(gw, gb) for a in pair]


def train(net: SurvivalNetwork, cohort, config: TrainConfig, trainable: str = "all"):
    """Mini-batch gradient descent on the network's loss.

    ``trainable="output"`` updates only the output layer; hidden arrays are
    never written. Returns ``(trained copy, per-epoch mean batch loss)``.
    """
    if trainable not in ("all", "output"):
        raise ValueError("trainable must be 'all' or 'output'")
    if net.kind != "deephit" and cohort.n_subjects < 2:
        raise ValueError("Cox losses need at least 2 subjects")
    net = net.copy()
    scaler = net.scaler or Standardizer.identity(cohort.n_features)
    x = scaler.transform(cohort.covariates)
    t = cohort.durations
    e = cohort.events
    n = len(t)
    bs = n if config.batch_size is None else min(config.batch_size, n)
    rng = np.random.default_rng(config.rng_seed)
    params = net.parameters()
    first = 0 if trainable == "all" else len(params) - 2
    velocity = [np.zeros_like(p) for p in params]
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        n_batches = 0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_gradients(net, x[idx], t[idx], e[idx], config, rng)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads[first:]):
                raise DivergenceError(epoch)
            total += loss
            n_batches += 1
            if config.learning_rate == 0:
                continue
            for j in range(first, len(params)):
                if config.optimizer == "momentum":
                    velocity[j] = config.momentum * velocity[j] - config.learning_rate * grads[j]
                    params[j] += velocity[j]
                else:
                    params[j] -= config.learning_rate * grads[j]
        trace.append(total / n_batches)
    if any(not np.all(np.isfinite(p)) for p in params):
        raise DivergenceError(config.epochs - 1)
    return net, trace


# ---------------------------------------------------------------- prediction

def _inputs(net, x):
    x = np.atleast_2d(np.asarray(x, float))
    return net.scaler.transform(x) if net.scaler is not None else x


def risk_scores(net: SurvivalNetwork, x) -> np.ndarray:
    """Log-risk scores of raw (unstandardized) covariates."""
    return forward(net, _inputs(net, x))


def fit_breslow(net: SurvivalNetwork, cohort) -> StepFunction:
    """Breslow baseline cumulative hazard given the network's scores."""
    theta = risk_scores(net, cohort.covariates)
    return breslow(theta, cohort.durations, cohort.events)


def breslow(theta, durations, events) -> StepFunction:
    t = np.asarray(durations, float)
    table = build_event_table(t, events)
    r = np.exp(np.asarray(theta, float))
    order = np.argsort(t, kind="stable")
    rev = np.cumsum(r[order][::-1])[::-1]
    first = np.searchsorted(t[order], table.times, side="left")
    return StepFunction(table.times, np.cumsum(table.deaths / rev[first]), 0.0)


def predict_curves(net: SurvivalNetwork, x, baseline: Optional[StepFunction] = None,
                   grid: Optional[DiscreteTimeGrid] = None) -> CurveBatch:
    """Survival curves for raw covariate rows."""
    z = _inputs(net, x)
    if net.kind == "deephit":
        grid = grid or net.grid
        if grid is None:
            raise ValueError("DeepHit prediction needs a time grid")
        y = forward(net, z)
        s = np.clip(1.0 - np.cumsum(y, axis=1), 0.0, 1.0)
        s = np.minimum.accumulate(s, axis=1)
        return CurveBatch(grid.cuts[1:], s)
    baseline = baseline or net.baseline
    if baseline is None:
        raise ValueError("Cox prediction needs a baseline cumulative hazard")
    theta = forward(net, z)
    s = np.exp(-np.outer(np.exp(theta), baseline.values))
    return CurveBatch(baseline.knots, s)


def predict_survival(net: SurvivalNetwork, x, baseline=None, grid=None) -> StepFunction:
    return predict_curves(net, np.asarray(x, float)[None], baseline, grid).curve(0)
