"""Per-subject curve reconstruction on [a, T*].

Each subject's sparse measurements become a function defined only up to
the subject's own follow-up end: one point gives a constant, two give the
least-squares line, three or more give a B-spline fit whose dimension is
chosen by leave-one-observation-out cross-validation. Curves never
extrapolate past T*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .data import SubjectSeries
from .exceptions import (
    DegenerateSeriesError,
    DimensionError,
    DomainError,
    TruncationDomainError,
)

# near-ties in cross-validation scores are floating-point noise; treat
# scores within this relative band of the minimum as exact ties
_CV_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class BasisConfig:
    """B-spline settings for subjects with three or more observations."""

    order: int = 4
    k_min: int | None = None
    k_max: int = 15

    def __post_init__(self):
        if self.order < 2:
            raise ValueError(f"spline order must be >= 2, got {self.order}")
        if self.k_min is not None and self.k_min < self.order:
            raise ValueError("k_min must be at least the spline order")
        if self.k_max < (self.k_min if self.k_min is not None else self.order):
            raise ValueError("k_max must be >= k_min")

    @property
    def effective_k_min(self) -> int:
        return self.order if self.k_min is None else self.k_min


@dataclass(frozen=True)
class CfdCurve:
    """A reconstructed curve truncated to the subject's follow-up [a, T*]."""

    subject_id: str
    domain_start: float
    domain_end: float
    kind: str  # "constant" | "linear" | "spline"
    coefficients: tuple[float, ...]
    knots: tuple[float, ...] | None = None
    order: int | None = None
    k_selected: int = 0

    def __call__(self, t):
        return eval_curve(self, t)

    def to_dict(self) -> dict:
        d = {
            "subject_id": self.subject_id,
            "domain_start": self.domain_start,
            "domain_end": self.domain_end,
            "kind": self.kind,
            "coefficients": list(self.coefficients),
            "k_selected": self.k_selected,
        }
        if self.kind == "spline":
            d["knots"] = list(self.knots)
            d["order"] = self.order
        return d

    @staticmethod
    def from_dict(d: dict) -> "CfdCurve":
        return CfdCurve(
            subject_id=d["subject_id"],
            domain_start=d["domain_start"],
            domain_end=d["domain_end"],
            kind=d["kind"],
            coefficients=tuple(d["coefficients"]),
            knots=tuple(d["knots"]) if d.get("knots") is not None else None,
            order=d.get("order"),
            k_selected=d.get("k_selected", 0),
        )


def make_knots(a: float, b: float, n_basis: int, order: int) -> np.ndarray:
    """Clamped knot vector: order-fold boundary knots, equally spaced interior."""
    if n_basis < order:
        raise ValueError(f"need at least {order} basis functions, got {n_basis}")
    if not a < b:
        raise ValueError(f"knot span [{a}, {b}] must be nondegenerate")
    interior = np.linspace(a, b, n_basis - order + 2)[1:-1]
    return np.concatenate([np.full(order, a), interior, np.full(order, b)])


def bspline_design(knots, order: int, times) -> np.ndarray:
    """Design matrix of B-spline basis values, one row per time.

    Rows satisfy the partition of unity; times outside the knot span
    raise a DomainError.
    """
    knots = np.asarray(knots, dtype=float)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size == 0:
        raise DimensionError("no evaluation times")
    lo, hi = knots[0], knots[-1]
    if np.any(times < lo) or np.any(times > hi):
        bad = times[(times < lo) | (times > hi)][0]
        raise DomainError(f"time {bad} outside knot span [{lo}, {hi}]")
    return BSpline.design_matrix(times, knots, order - 1, extrapolate=False).toarray()


def ls_fit(design, y) -> np.ndarray:
    """Least-squares coefficients via orthogonal factorization.

    Rank-deficient systems get the minimum-norm solution.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if design.size == 0 or y.size == 0:
        raise DimensionError("empty least-squares system")
    if design.shape[0] != y.shape[0]:
        raise DimensionError(f"{design.shape[0]} rows vs {y.shape[0]} responses")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def _loocv_score(times, values, knots, order) -> float:
    """Sum of squared leave-one-out prediction errors.

    For full-rank designs with no leverage-one point the withheld-fit
    residual equals r_j / (1 - h_jj), so one QR factorization covers all
    J refits; otherwise each observation is honestly refit without it.
    """
    design = bspline_design(knots, order, times)
    n, k = design.shape
    if n > k:
        q, r = np.linalg.qr(design)
        diag = np.abs(np.diag(r))
        if diag.min() > 1e-12 * max(diag.max(), 1.0):
            leverage = np.einsum("ij,ij->i", q, q)
            denom = 1.0 - leverage
            if np.all(denom > 1e-10):
                coef = np.linalg.solve(r, q.T @ values)
                resid = values - design @ coef
                return float(np.sum((resid / denom) ** 2))
    total = 0.0
    for j in range(n):
        keep = np.arange(n) != j
        coef = ls_fit(design[keep], values[keep])
        pred = float(design[j] @ coef)
        if not np.isfinite(pred):
            return np.inf
        total += (values[j] - pred) ** 2
    return total


def select_k_loocv(series: SubjectSeries, config: BasisConfig, domain_start: float | None = None) -> int:
    """Choose the spline dimension by leave-one-observation-out CV.

    Candidates run from k_min to min(k_max, J); scores within a relative
    round-off band of the minimum count as ties, broken toward smaller K.
    """
    times = np.asarray(series.times, dtype=float)
    values = np.asarray(series.values, dtype=float)
    a = times[0] if domain_start is None else domain_start
    b = series.event_time
    k_lo = config.effective_k_min
    k_hi = min(config.k_max, len(times))
    if k_hi < k_lo:
        raise DegenerateSeriesError(
            f"subject {series.subject_id!r}: {len(times)} observations cannot support K >= {k_lo}"
        )
    scores = []
    for k in range(k_lo, k_hi + 1):
        knots = make_knots(a, b, k, config.order)
        scores.append(_loocv_score(times, values, knots, config.order))
    scores = np.asarray(scores)
    if not np.any(np.isfinite(scores)):
        raise DegenerateSeriesError(f"subject {series.subject_id!r}: every candidate fit degenerate")
    smin = scores.min()
    tol = _CV_TIE_RTOL * max(1.0, float(np.sum(values**2)))
    best = int(np.flatnonzero(scores <= smin + tol)[0])
    return k_lo + best


def fit_cfd(series: SubjectSeries, config: BasisConfig | None = None, domain_start: float | None = None) -> CfdCurve:
    """Reconstruct one subject's curve on [a, T*].

    One observation gives a constant, two give the exact least-squares
    line, three or more give a B-spline least-squares fit. The spline
    order drops to J for subjects with fewer points than the configured
    order, and the dimension comes from LOOCV once J exceeds order.
    """
    config = config or BasisConfig()
    times = np.asarray(series.times, dtype=float)
    values = np.asarray(series.values, dtype=float)
    a = times[0] if domain_start is None else float(domain_start)
    b = float(series.event_time)
    j = len(times)
    if np.unique(times).size != j:
        raise DegenerateSeriesError(f"subject {series.subject_id!r}: repeated observation times")
    if j == 1:
        return CfdCurve(series.subject_id, a, b, "constant", (float(values[0]),))
    if j == 2:
        b1 = (values[1] - values[0]) / (times[1] - times[0])
        b0 = values[0] - b1 * times[0]
        return CfdCurve(series.subject_id, a, b, "linear", (float(b0), float(b1)))
    order = min(config.order, j)
    if j >= config.order + 1:
        k = select_k_loocv(series, config, domain_start=a)
    else:
        # 3 <= J <= order: smallest feasible dimension at the reduced order
        k = j
    knots = make_knots(a, b, k, order)
    coef = ls_fit(bspline_design(knots, order, times), values)
    return CfdCurve(
        series.subject_id,
        a,
        b,
        "spline",
        tuple(float(c) for c in coef),
        knots=tuple(knots),
        order=order,
        k_selected=k,
    )


def eval_curve(curve: CfdCurve, t):
    """Evaluate the stored representation; never past the truncation point."""
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(arr < curve.domain_start) or np.any(arr > curve.domain_end):
        bad = arr[(arr < curve.domain_start) | (arr > curve.domain_end)][0]
        raise TruncationDomainError(
            f"subject {curve.subject_id!r}: t={bad} outside [{curve.domain_start}, {curve.domain_end}]"
        )
    if curve.kind == "constant":
        out = np.full_like(arr, curve.coefficients[0])
    elif curve.kind == "linear":
        b0, b1 = curve.coefficients
        out = b0 + b1 * arr
    elif curve.kind == "spline":
        spl = BSpline(np.asarray(curve.knots), np.asarray(curve.coefficients), curve.order - 1, extrapolate=False)
        out = spl(arr)
    else:
        raise ValueError(f"unknown curve kind {curve.kind!r}")
    return out if np.ndim(t) else float(out[0])
