"""Nonparametric survival estimators, the log-rank statistic and C^td.

Everything here is a pure function of its inputs. Arrays stored on the
returned objects are marked read-only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Cohort:
    """Covariates plus right-censored outcomes for ``n`` subjects."""

    covariates: np.ndarray
    durations: np.ndarray
    events: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        t = np.asarray(self.durations, dtype=float).ravel()
        e = np.asarray(self.events).ravel()
        if len(t) == 0:
            raise ValueError("empty cohort")
        if not (x.shape[0] == len(t) == len(e)):
            raise ValueError(
                f"length mismatch: {x.shape[0]} covariate rows, "
                f"{len(t)} durations, {len(e)} events")
        if np.any(~np.isfinite(t)) or np.any(t < 0):
            raise ValueError("durations must be finite and non-negative")
        if not np.all((e == 0) | (e == 1)):
            raise ValueError("events must be 0 or 1")
        names = tuple(self.feature_names) or tuple(
            f"x{j}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise ValueError("feature_names length must equal n_features")
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        object.__setattr__(self, "covariates", _frozen(x))
        object.__setattr__(self, "durations", _frozen(t))
        object.__setattr__(self, "events", _frozen(e, dtype=np.int64))
        object.__setattr__(self, "feature_names", names)

    @property
    def n_subjects(self) -> int:
        return len(self.durations)

    @property
    def n_features(self) -> int:
        return self.covariates.shape[1]

    def subset(self, idx) -> "Cohort":
        idx = np.asarray(idx)
        return Cohort(self.covariates[idx], self.durations[idx],
                      self.events[idx], self.feature_names)

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        return (self.feature_names == other.feature_names
                and np.array_equal(self.covariates, other.covariates)
                and np.array_equal(self.durations, other.durations)
                and np.array_equal(self.events, other.events))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class EventTable:
    times: np.ndarray
    deaths: np.ndarray
    at_risk: np.ndarray

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous piecewise-constant function of time.

    ``f(t) = initial_value`` for ``t < knots[0]``, otherwise ``values[j]``
    for the largest ``j`` with ``knots[j] <= t``.
    """

    knots: np.ndarray
    values: np.ndarray
    initial_value: float = 0.0

    def __post_init__(self):
        k = _frozen(self.knots).ravel()
        v = _frozen(self.values).ravel()
        if len(k) != len(v):
            raise ValueError("knots and values must have equal length")
        if len(k) > 1 and np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "initial_value", float(self.initial_value))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        j = np.searchsorted(self.knots, t, side="right") - 1
        padded = np.concatenate(([self.initial_value], self.values))
        out = padded[j + 1]
        return out if out.ndim else float(out)

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return (self.initial_value == other.initial_value
                and np.array_equal(self.knots, other.knots)
                and np.array_equal(self.values, other.values))

    __hash__ = None


def build_event_table(durations, events, weights=None) -> EventTable:
    """Distinct event times with tied deaths and risk-set sizes.

    A subject censored at ``t`` is still at risk at ``t``.
    """
    t = np.asarray(durations, dtype=float).ravel()
    e = np.asarray(events).ravel()
    if len(t) == 0:
        raise ValueError("empty cohort")
    if len(e) != len(t):
        raise ValueError("durations and events differ in length")
    if weights is None:
        w = np.ones(len(t), dtype=np.int64)
    else:
        w = np.asarray(weights).ravel()
        if len(w) != len(t):
            raise ValueError("weights length mismatch")
        if np.any(w <= 0) or np.any(w != np.round(w)):
            raise ValueError("weights must be positive integers")
        w = w.astype(np.int64)

    uniq, inv = np.unique(t, return_inverse=True)
    count = np.bincount(inv, weights=w, minlength=len(uniq)).astype(np.int64)
    dead = np.bincount(inv, weights=w * (e == 1),
                       minlength=len(uniq)).astype(np.int64)
    at_risk = np.cumsum(count[::-1])[::-1]
    keep = dead > 0
    return EventTable(_frozen(uniq[keep]), _frozen(dead[keep], np.int64),
                      _frozen(at_risk[keep], np.int64))


def nelson_aalen(table: EventTable) -> StepFunction:
    return StepFunction(table.times, np.cumsum(table.deaths / table.at_risk), 0.0)


def kaplan_meier(table: EventTable) -> StepFunction:
    return StepFunction(table.times,
                        np.cumprod(1.0 - table.deaths / table.at_risk), 1.0)


def surv_from_cumhaz(cumhaz: StepFunction) -> StepFunction:
    if cumhaz.initial_value < 0 or np.any(cumhaz.values < 0):
        raise ValueError("not a cumulative hazard")
    return StepFunction(cumhaz.knots, np.exp(-cumhaz.values),
                        np.exp(-cumhaz.initial_value))


def log_rank_statistic(group_a, group_b) -> float:
    """Absolute standardized two-sample log-rank statistic ``|O - E| / sqrt(V)``.

    Each group is a ``(durations, events)`` pair.
    """
    ta, ea = (np.asarray(v).ravel() for v in group_a)
    tb, eb = (np.asarray(v).ravel() for v in group_b)
    if len(ta) == 0 or len(tb) == 0:
        raise ValueError("degenerate split")
    t = np.concatenate((ta, tb)).astype(float)
    e = np.concatenate((ea, eb)) == 1
    in_a = np.zeros(len(t), dtype=bool)
    in_a[:len(ta)] = True
    return float(_logrank_sorted(t, e, in_a[:, None])[0])


def _logrank_sorted(t, e, membership, presorted=False):
    """Vectorized log-rank over candidate partitions.

    ``membership`` is an ``(n, C)`` boolean matrix; column ``c`` marks group
    A for candidate ``c``. Returns ``C`` statistics.
    """
    if presorted:
        m = membership.astype(float)
    else:
        order = np.argsort(t, kind="stable")
        t = t[order]
        e = e[order]
        m = membership[order].astype(float)
    n = len(t)
    groups = np.flatnonzero(np.r_[True, t[1:] != t[:-1]])
    d = np.add.reduceat(e.astype(float), groups)
    hit = d > 0
    if not np.any(hit):
        return np.zeros(m.shape[1])
    da = np.add.reduceat(m * e[:, None], groups, axis=0)[hit]
    starts = groups[hit]
    d = d[hit]
    y = (n - starts).astype(float)
    ya = np.cumsum(m[::-1], axis=0)[::-1][starts]
    frac = ya / y[:, None]
    o_minus_e = np.sum(da - frac * d[:, None], axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        shrink = np.where(y > 1, (y - d) / (y - 1), 0.0)
    var = np.sum(frac * (1 - frac) * (d * shrink)[:, None], axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        stat = np.where(var > 0, np.abs(o_minus_e) / np.sqrt(var), 0.0)
    return stat


@dataclass(frozen=True, eq=False)
class CurveBatch:
    """Survival curves of many subjects on one shared knot grid.

    ``values[j, g]`` is subject ``j``'s survival at ``knots[g]``; before the
    first knot every curve equals 1.
    """

    knots: np.ndarray
    values: np.ndarray
    initial_value: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "knots", _frozen(self.knots).ravel())
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[1] != len(self.knots):
            raise ValueError("values must be (n_subjects, n_knots)")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    def curve(self, j: int) -> StepFunction:
        return StepFunction(self.knots, self.values[j], self.initial_value)

    def at(self, times) -> np.ndarray:
        """Matrix ``M[i, j] = S_j(times[i])``."""
        idx = np.searchsorted(self.knots, np.asarray(times, float), side="right") - 1
        padded = np.concatenate(
            (np.full((len(self), 1), self.initial_value), self.values), axis=1)
        return padded[:, idx + 1].T


def concordance_td(cohort, predicted_survival) -> float:
    """Antolini's time-dependent concordance index.

    Pair ``(i, j)`` is comparable when ``i`` had an event and either
    ``T_i < T_j`` or ``T_i == T_j`` with ``j`` censored. It is concordant when
    ``S_i(T_i) < S_j(T_i)``; tied survival values count one half.

    ``cohort`` may be a :class:`Cohort` or a ``(durations, events)`` pair;
    ``predicted_survival`` a :class:`CurveBatch` or a sequence of
    :class:`StepFunction`, one per subject.
    """
    if isinstance(cohort, Cohort):
        t, e = cohort.durations, cohort.events
    else:
        t, e = (np.asarray(v).ravel() for v in cohort)
    t = np.asarray(t, float)
    e = np.asarray(e) == 1
    if isinstance(predicted_survival, CurveBatch):
        if len(predicted_survival) != len(t):
            raise ValueError("one survival curve per subject required")
        surv = predicted_survival.at(t)
    else:
        curves: Sequence[StepFunction] = predicted_survival
        if len(curves) != len(t):
            raise ValueError("one survival curve per subject required")
        surv = np.column_stack([c(t) for c in curves])
    return concordance_from_matrix(t, e, surv)


def concordance_from_matrix(t, e, surv) -> float:
    """C^td from ``surv[i, j] = S_j(T_i)``."""
    t = np.asarray(t, float)
    e = np.asarray(e, bool)
    own = np.diag(surv)
    comparable = e[:, None] & ((t[:, None] < t[None, :])
                               | ((t[:, None] == t[None, :]) & ~e[None, :]))
    n_comp = int(comparable.sum())
    if n_comp == 0:
        raise ValueError("no comparable pairs")
    conc = np.sum(comparable & (own[:, None] < surv))
    ties = np.sum(comparable & (own[:, None] == surv))
    return float((conc + 0.5 * ties) / n_comp)
