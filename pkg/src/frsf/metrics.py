"""Out-of-bag evaluation: concordance, censoring-weighted Brier, CRPS.

The Brier score uses inverse-probability-of-censoring weights from the
Kaplan-Meier estimate of the censoring distribution; with no censoring
every weight is one and the plain squared error is recovered. CRPS is
the time-average of the Brier curve over [0, t_max], extending the curve
by its nearest value outside the evaluated range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import EvaluabilityError, UndefinedConcordanceError
from .survival import StepFunction, kaplan_meier, risk_table


def concordance_index(mortality, times, events) -> tuple[float, int]:
    """Harrell's C over comparable pairs and the pair count.

    Pair (i, j) is comparable when T_i < T_j and subject i had the event;
    concordance means the earlier failure carries the higher risk score.
    Tied scores count one half.
    """
    m = np.asarray(mortality, dtype=float)
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=int)
    if not (m.size == t.size == e.size):
        raise ValueError("mortality, times and events must align")
    concordant = 0.0
    n_pairs = 0
    for i in range(m.size):
        if e[i] != 1:
            continue
        later = t > t[i]
        n_pairs += int(later.sum())
        concordant += float(np.sum(m[later] < m[i])) + 0.5 * float(np.sum(m[later] == m[i]))
    if n_pairs == 0:
        raise UndefinedConcordanceError("no comparable pairs")
    return concordant / n_pairs, n_pairs


def censoring_km(times, events) -> StepFunction:
    """Kaplan-Meier estimate of the censoring distribution (flipped roles)."""
    e = 1 - np.asarray(events, dtype=int)
    rt = risk_table(times, e)
    return kaplan_meier(rt)


def brier_score(surv_at_t, t: float, times, events, censor_km: StepFunction) -> float:
    """Censoring-weighted squared error of survival predictions at time t.

    Weights: observed failures by t get 1/G(T_i-), still-at-risk subjects
    get 1/G(t), censored-by-t subjects get 0. G(t) must be positive.
    """
    s = np.asarray(surv_at_t, dtype=float)
    tt = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=int)
    if not (s.size == tt.size == e.size):
        raise ValueError("predictions, times and events must align")
    g_t = censor_km(t)
    if g_t <= 0.0:
        raise EvaluabilityError(f"censoring survival vanishes at t={t}")
    alive = tt > t
    dead = (tt <= t) & (e == 1)
    w = np.zeros(s.size)
    w[alive] = 1.0 / g_t
    if dead.any():
        g_before = np.asarray(censor_km.before(tt[dead]), dtype=float)
        if np.any(g_before <= 0.0):
            raise EvaluabilityError("censoring survival vanishes before an observed event")
        w[dead] = 1.0 / g_before
    return float(np.mean(w * (alive.astype(float) - s) ** 2))


def crps(brier_curve, t_max: float) -> float:
    """Time-normalized integral of the Brier curve over [0, t_max].

    Trapezoid rule between curve points; constant (nearest-value)
    extension from 0 to the first point and from the last point to t_max.
    """
    if t_max <= 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    pts = [(float(t), float(b)) for t, b in brier_curve]
    if not pts:
        raise ValueError("empty curve")
    ts = np.asarray([p[0] for p in pts])
    bs = np.asarray([p[1] for p in pts])
    if np.any(np.diff(ts) < 0) or ts[-1] > t_max:
        raise ValueError("curve times must be ordered and not exceed t_max")
    integral = float(np.trapezoid(bs, ts))
    integral += bs[0] * (ts[0] - 0.0)
    integral += bs[-1] * (t_max - ts[-1])
    return integral / t_max


@dataclass(frozen=True)
class EvaluationReport:
    """Out-of-bag scores plus the resolved configuration they came from."""

    oob_cindex: float
    rpe: float
    crps: float
    brier_curve: tuple[tuple[float, float], ...]
    n_comparable_pairs: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "oob_cindex": self.oob_cindex,
            "rpe_as_one_minus_cindex": self.rpe,
            "crps": self.crps,
            "brier_curve": [[t, b] for t, b in self.brier_curve],
            "n_comparable_pairs": self.n_comparable_pairs,
            "config": self.config,
        }

    def metric_rows(self) -> list[tuple[str, float]]:
        return [
            ("oob_cindex", self.oob_cindex),
            ("rpe_as_one_minus_cindex", self.rpe),
            ("crps", self.crps),
            ("n_comparable_pairs", float(self.n_comparable_pairs)),
        ]

    def to_csv(self) -> str:
        lines = ["metric,value"] + [f"{k},{v!r}" for k, v in self.metric_rows()]
        return "\n".join(lines) + "\n"

    def brier_csv(self) -> str:
        lines = ["t,bs"] + [f"{t!r},{b!r}" for t, b in self.brier_curve]
        return "\n".join(lines) + "\n"


def evaluate_predictions(
    mortality, survival_fns, times, events, eval_times=None, config=None
) -> EvaluationReport:
    """Score risk rankings and survival curves against observed outcomes.

    eval_times defaults to the distinct event times at or below the 95th
    percentile of follow-up, which keeps the censoring weights finite.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=int)
    c, n_pairs = concordance_index(mortality, t, e)
    g = censoring_km(t, e)
    if eval_times is None:
        cutoff = float(np.quantile(t, 0.95))
        eval_times = np.unique(t[(e == 1) & (t <= cutoff)])
    curve = []
    for tt in np.asarray(eval_times, dtype=float):
        preds = np.asarray([fn(tt) for fn in survival_fns])
        curve.append((float(tt), brier_score(preds, tt, t, e, g)))
    t_max = curve[-1][0] if curve else float(t.max())
    score = crps(curve, t_max) if curve else float("nan")
    return EvaluationReport(
        oob_cindex=c,
        rpe=1.0 - c,
        crps=score,
        brier_curve=tuple(curve),
        n_comparable_pairs=n_pairs,
        config=dict(config or {}),
    )
