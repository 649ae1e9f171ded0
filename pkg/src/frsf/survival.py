"""Nonparametric survival estimators and the log-rank split statistic.

Conventions: subjects censored exactly at an event time count as at risk
at that time; the log-rank variance term at a time with a single subject
at risk is skipped (its (r-d)/(r-1) factor is singular).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateSplitError, EmptySampleError, ValidationError


@dataclass(frozen=True)
class RiskTable:
    """Distinct event times with event counts d and at-risk counts r."""

    event_times: np.ndarray
    d: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        if np.any(self.d < 1) or np.any(self.d > self.r):
            raise ValidationError("risk table must satisfy 1 <= d_l <= r_l")
        if np.any(np.diff(self.r) > 0):
            raise ValidationError("at-risk counts must be nonincreasing")


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function: value is `left_value` before the
    first knot and `values[i]` on [knots[i], knots[i+1])."""

    knots: np.ndarray
    values: np.ndarray
    left_value: float

    def __call__(self, t):
        idx = np.searchsorted(self.knots, t, side="right") - 1
        vals = np.concatenate(([self.left_value], self.values))
        return vals[np.asarray(idx) + 1] if np.ndim(t) else float(vals[idx + 1])

    def before(self, t):
        """Left limit: the value just before time t."""
        idx = np.searchsorted(self.knots, t, side="left") - 1
        vals = np.concatenate(([self.left_value], self.values))
        return vals[np.asarray(idx) + 1] if np.ndim(t) else float(vals[idx + 1])


def risk_table(times, events) -> RiskTable:
    """Build the (t_l, d_l, r_l) table over distinct event times.

    r_l counts subjects with follow-up time >= t_l, so censorings at t_l
    are still at risk at t_l.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(events)
    if t.size == 0:
        raise EmptySampleError("no subjects")
    if t.shape != e.shape:
        raise ValidationError("times and events must have equal length")
    e = e.astype(int)
    if np.any((e != 0) & (e != 1)):
        raise ValidationError("event indicators must be 0 or 1")
    event_times = np.sort(t[e == 1])
    uniq = np.unique(event_times)
    if uniq.size == 0:
        return RiskTable(uniq, np.zeros(0, dtype=int), np.zeros(0, dtype=int))
    d = np.searchsorted(event_times, uniq, side="right") - np.searchsorted(event_times, uniq, side="left")
    all_sorted = np.sort(t)
    r = t.size - np.searchsorted(all_sorted, uniq, side="left")
    return RiskTable(uniq, d.astype(int), r.astype(int))


def kaplan_meier(rt: RiskTable) -> StepFunction:
    """Product-limit survival estimate; 1 before the first event."""
    with np.errstate(divide="ignore", invalid="ignore"):
        surv = np.cumprod(1.0 - rt.d / rt.r) if rt.d.size else np.zeros(0)
    return StepFunction(knots=rt.event_times, values=surv, left_value=1.0)


def nelson_aalen(rt: RiskTable) -> StepFunction:
    """Cumulative-hazard estimate; 0 before the first event."""
    chf = np.cumsum(rt.d / rt.r) if rt.d.size else np.zeros(0)
    return StepFunction(knots=rt.event_times, values=chf, left_value=0.0)


def _logrank_from_counts(d, r, d1, r1) -> float:
    """Standardized two-group statistic from pooled-table counts.

    d, r: pooled event and at-risk counts at each distinct event time;
    d1, r1: the same restricted to the first group. Times where only one
    subject is at risk contribute no variance and are skipped in the
    denominator. Returns 0 when the variance sum is 0.
    """
    d = np.asarray(d, dtype=float)
    r = np.asarray(r, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    r1 = np.asarray(r1, dtype=float)
    num = np.sum(d1 - r1 * d / r)
    safe = r > 1
    frac = r1[safe] / r[safe]
    var = float(np.sum(frac * (1.0 - frac) * (r[safe] - d[safe]) / (r[safe] - 1.0) * d[safe]))
    if var <= 0.0:
        return 0.0
    return float(abs(num) / np.sqrt(var))


def logrank_stat(left: tuple, right: tuple) -> float:
    """|L| for the two-group log-rank split over pooled distinct event times.

    `left` and `right` are (times, events) pairs. Both groups must be
    nonempty; returns 0 if the pooled sample has no discriminating
    variance.
    """
    lt, le = (np.asarray(a) for a in left)
    rt_, re_ = (np.asarray(a) for a in right)
    if lt.size == 0 or rt_.size == 0:
        raise DegenerateSplitError("both groups must be nonempty")
    all_t = np.concatenate([lt, rt_]).astype(float)
    all_e = np.concatenate([le, re_]).astype(int)
    pooled = risk_table(all_t, all_e)
    if pooled.event_times.size == 0:
        return 0.0
    lt = lt.astype(float)
    le = le.astype(int)
    d1 = np.array([int(np.sum((lt == ut) & (le == 1))) for ut in pooled.event_times])
    r1 = np.array([int(np.sum(lt >= ut)) for ut in pooled.event_times])
    return _logrank_from_counts(pooled.d, pooled.r, d1, r1)


def group_counts(event_times: np.ndarray, times: np.ndarray, events: np.ndarray):
    """Per-time (d1, r1) counts of one group against pooled event times.

    Vectorized for repeated split evaluation: r1 via a sorted-times
    suffix count, d1 via searchsorted over the group's event times.
    """
    st = np.sort(times)
    r1 = times.size - np.searchsorted(st, event_times, side="left")
    evt = np.sort(times[events == 1])
    d1 = np.searchsorted(evt, event_times, side="right") - np.searchsorted(evt, event_times, side="left")
    return d1, r1
