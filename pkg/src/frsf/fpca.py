"""Functional principal components for truncated, irregularly observed curves.

Curves are resampled on a shared step-h grid (each subject only up to its
own follow-up end), pooled into mean and covariance scatters, smoothed by
local linear regression, and eigendecomposed under trapezoid quadrature.
Scores come either from the direct Riemann sum or from the Gaussian
conditional expectation, which shrinks toward zero as measurement noise
grows and is the estimator of choice for short, sparse subjects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .basis import CfdCurve, eval_curve
from .data import Dataset
from .exceptions import (
    BandwidthSelectionError,
    ConditioningError,
    DegenerateModelError,
    DimensionError,
    DomainError,
    ResolutionError,
    SparseSupportError,
)
from .smoothing import (
    MAX_DOUBLINGS,
    _loclin_2d_node,
    bandwidth_ladder,
    epanechnikov,
    loclin_1d,
    select_bandwidth_gcv,
)

_RELTOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Regular evaluation grid with trapezoid quadrature weights."""

    step: float
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    def to_dict(self) -> dict:
        return {"step": self.step, "nodes": self.nodes.tolist(), "weights": self.weights.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "Grid":
        return Grid(d["step"], np.asarray(d["nodes"]), np.asarray(d["weights"]))


def build_grid(domain: tuple[float, float], h: float) -> Grid:
    """Nodes a, a+h, a+2h, ... plus b when not already reached."""
    a, b = float(domain[0]), float(domain[1])
    if not (0 < h <= b - a):
        raise ValueError(f"grid step must satisfy 0 < h <= {b - a}, got {h}")
    n_steps = int(np.floor((b - a) / h))
    nodes = a + h * np.arange(n_steps + 1)
    nodes = nodes[nodes <= b]
    if nodes[-1] < b:
        nodes = np.append(nodes, b)
    w = np.empty_like(nodes)
    w[0] = (nodes[1] - nodes[0]) / 2
    w[-1] = (nodes[-1] - nodes[-2]) / 2
    if nodes.size > 2:
        w[1:-1] = (nodes[2:] - nodes[:-2]) / 2
    return Grid(step=h, nodes=nodes, weights=w)


@dataclass(frozen=True)
class GriddedSubject:
    """A subject's curve values at the grid nodes not past its T*."""

    subject_id: str
    n_nodes: int  # grid nodes 0..n_nodes-1 are in-domain
    values: np.ndarray
    event_time: float
    event: bool | None = None


def resample_curves(
    curves: list[CfdCurve], grid: Grid, events: dict[str, bool] | None = None
) -> list[GriddedSubject]:
    """Evaluate every curve at all grid nodes up to its own follow-up end."""
    out = []
    for c in curves:
        m = int(np.searchsorted(grid.nodes, c.domain_end, side="right"))
        if m == 0:
            raise ResolutionError(
                f"subject {c.subject_id!r}: no grid node at or before T*={c.domain_end}"
            )
        vals = np.asarray(eval_curve(c, grid.nodes[:m]), dtype=float)
        ev = events.get(c.subject_id) if events else None
        out.append(GriddedSubject(c.subject_id, m, vals, c.domain_end, ev))
    return out


def pooled_scatter(gridded: list[GriddedSubject], grid: Grid):
    """Aggregate per-node counts and value sums of the pooled scatterplot."""
    counts = np.zeros(grid.nodes.size)
    sums = np.zeros(grid.nodes.size)
    for g in gridded:
        counts[: g.n_nodes] += 1.0
        sums[: g.n_nodes] += g.values
    return counts, sums


def estimate_mean(gridded: list[GriddedSubject], grid: Grid, bw: float) -> np.ndarray:
    """Local linear smooth of the pooled (node, value) scatter at the nodes."""
    counts, sums = pooled_scatter(gridded, grid)
    live = counts > 0
    if not live.any():
        raise SparseSupportError("pooled scatterplot is empty")
    return loclin_1d(
        grid.nodes[live], sums[live] / counts[live], bw, grid.nodes, counts=counts[live]
    )


@dataclass(frozen=True)
class RawCovariances:
    """Off-diagonal raw covariance products aggregated per node pair.

    count[g, g'], total[g, g'] and total_sq[g, g'] are the number, sum
    and sum of squares of the products (Y_ig - mean_g)(Y_ig' - mean_g')
    over subjects observing both nodes, g != g'. These are sufficient
    statistics for any kernel-weighted fit and its GCV score, since all
    contributions at a cell share the same coordinates.
    """

    count: np.ndarray
    total: np.ndarray
    total_sq: np.ndarray

    @property
    def n_pairs(self) -> int:
        return int(self.count.sum())


def raw_covariances(gridded: list[GriddedSubject], mean: np.ndarray) -> RawCovariances:
    """All ordered off-diagonal residual products, per subject."""
    g_count = mean.size
    count = np.zeros((g_count, g_count))
    total = np.zeros((g_count, g_count))
    total_sq = np.zeros((g_count, g_count))
    for g in gridded:
        m = g.n_nodes
        if m < 2:
            continue
        r = g.values - mean[:m]
        prod = np.outer(r, r)
        total[:m, :m] += prod
        total_sq[:m, :m] += prod * prod
        count[:m, :m] += 1.0
    # diagonal cells hold exactly the j == l products; drop them
    np.fill_diagonal(count, 0.0)
    np.fill_diagonal(total, 0.0)
    np.fill_diagonal(total_sq, 0.0)
    return RawCovariances(count=count, total=total, total_sq=total_sq)


def _cov_moments(raw: RawCovariances, grid: Grid, h1: float, h2: float):
    """Batched weighted-plane normal equations at every grid node pair.

    Exploits that all raw points sit on grid nodes: every kernel moment
    is a product of G x G matrices. Returns (lhs, rhs, ok) where ok marks
    nodes with enough non-collinear support to solve directly.
    """
    t = grid.nodes
    G = t.size
    du = t[None, :] - t[:, None]  # [eval, point]
    ks = epanechnikov(du / h1)
    kt = epanechnikov(du / h2)
    us = du / h1
    ut = du / h2
    C, V = raw.count, raw.total
    A = [ks, ks * us, ks * us * us]
    B = [kt, kt * ut, kt * ut * ut]
    lhs = np.empty((G, G, 3, 3))
    lhs[..., 0, 0] = A[0] @ C @ B[0].T
    lhs[..., 0, 1] = lhs[..., 1, 0] = A[1] @ C @ B[0].T
    lhs[..., 0, 2] = lhs[..., 2, 0] = A[0] @ C @ B[1].T
    lhs[..., 1, 1] = A[2] @ C @ B[0].T
    lhs[..., 1, 2] = lhs[..., 2, 1] = A[1] @ C @ B[1].T
    lhs[..., 2, 2] = A[0] @ C @ B[2].T
    rhs = np.stack([A[0] @ V @ B[0].T, A[1] @ V @ B[0].T, A[0] @ V @ B[1].T], axis=-1)
    eig = np.linalg.eigvalsh(lhs)
    support = (ks > 0).astype(float) @ (C > 0).astype(float) @ (kt > 0).astype(float).T
    ok = (support >= 3) & (eig[..., 0] > _RELTOL * np.maximum(eig[..., -1], 0.0))
    return lhs, rhs, ok


def smooth_cov_surface(raw: RawCovariances, bw2: tuple[float, float], grid: Grid) -> np.ndarray:
    """Local plane smooth of the raw covariances onto grid x grid, symmetrized.

    Nodes whose kernel support is deficient fall back to the generic
    escalating fit.
    """
    if raw.n_pairs == 0:
        raise SparseSupportError("no off-diagonal covariance pairs")
    h1, h2 = float(bw2[0]), float(bw2[1])
    if h1 <= 0 or h2 <= 0:
        raise ValueError(f"bandwidths must be positive, got {bw2}")
    t = grid.nodes
    G = t.size
    lhs, rhs, ok = _cov_moments(raw, grid, h1, h2)
    out = np.empty((G, G))
    if ok.any():
        out[ok] = np.linalg.solve(lhs[ok], rhs[ok][..., None])[..., 0, 0]
    if not ok.all():
        ii, jj = np.nonzero(~ok)
        live = raw.count > 0
        pi, pj = np.nonzero(live)
        vals = raw.total[live] / raw.count[live]
        cnts = raw.count[live]
        order = np.argsort(t[pi], kind="stable")
        ps, pt_, pv, pc = t[pi][order], t[pj][order], vals[order], cnts[order]
        for i, j in zip(ii, jj):
            out[i, j] = _loclin_2d_node(ps, pt_, pv, pc, t[i], t[j], h1, h2)
    return (out + out.T) / 2.0


def select_cov_bandwidth_gcv(raw: RawCovariances, grid: Grid, candidates=None) -> float:
    """GCV-selected bandwidth (shared by both axes) for the surface smooth.

    The score uses the exact fitted values and smoother diagonal at the
    data cells; candidates with singular designs anywhere in the data
    score as unusable. Ties go to the smaller bandwidth.
    """
    if raw.n_pairs == 0:
        raise SparseSupportError("no off-diagonal covariance pairs")
    if candidates is None:
        a, b = grid.domain
        candidates = bandwidth_ladder(grid.nodes, b - a)
    data = raw.count > 0
    n = float(raw.count.sum())
    k0_sq = 0.75 * 0.75
    best, best_score = None, np.inf
    any_ok = False
    for h in sorted(float(c) for c in candidates):
        lhs, rhs, ok = _cov_moments(raw, grid, h, h)
        if not np.all(ok[data]):
            continue
        A = lhs[data]
        fitted = np.linalg.solve(A, rhs[data][..., None])[..., 0, 0]
        det = np.linalg.det(A)
        inv11 = (A[:, 1, 1] * A[:, 2, 2] - A[:, 1, 2] ** 2) / det
        trace = float(np.sum(raw.count[data] * k0_sq * inv11))
        rss = float(
            np.sum(raw.count[data] * fitted**2 - 2.0 * fitted * raw.total[data] + raw.total_sq[data])
        )
        dof = n - trace
        if dof <= 0:
            continue
        any_ok = True
        score = n * rss / dof**2
        if score < best_score:
            best, best_score = h, score
    if not any_ok:
        raise BandwidthSelectionError("no usable covariance bandwidth candidate")
    return best


def estimate_sigma2(
    gridded: list[GriddedSubject], mean: np.ndarray, cov_surface: np.ndarray, grid: Grid, bw: float
) -> float:
    """Noise variance from the smoothed squared-residual diagonal.

    The diagonal of the raw second-moment surface carries signal variance
    plus noise; subtracting the off-diagonal-smoothed covariance diagonal
    and averaging over the interior two quartiles (boundary bias is worst
    at the edges) isolates the noise. Clamped at zero.
    """
    G = grid.nodes.size
    counts = np.zeros(G)
    sums = np.zeros(G)
    for g in gridded:
        m = g.n_nodes
        r2 = (g.values - mean[:m]) ** 2
        counts[:m] += 1.0
        sums[:m] += r2
    live = counts > 0
    if not live.any():
        raise SparseSupportError("no residuals to estimate noise from")
    vhat = loclin_1d(grid.nodes[live], sums[live] / counts[live], bw, grid.nodes, counts=counts[live])
    a, b = grid.domain
    lo, hi = a + 0.25 * (b - a), a + 0.75 * (b - a)
    interior = (grid.nodes >= lo) & (grid.nodes <= hi)
    if not interior.any():
        interior = np.ones(G, dtype=bool)
    return max(0.0, float(np.mean(vhat[interior] - np.diag(cov_surface)[interior])))


def quad_inner(f, g, grid: Grid) -> float:
    """Trapezoid-quadrature inner product of grid vectors."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.size != grid.nodes.size or g.size != grid.nodes.size:
        raise DimensionError("vectors must live on the grid")
    return float(np.sum(grid.weights * f * g))


def eigendecompose(cov: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature-weighted eigenpairs of a symmetric covariance surface.

    Solves the integral eigenproblem through the symmetric matrix
    W^(1/2) C W^(1/2); eigenfunctions are back-transformed so their
    quadrature L2 norm is one, negatives are dropped, and each function
    is flipped so its integral is nonnegative (first nonzero coordinate
    positive when the integral vanishes exactly).
    """
    cov = np.asarray(cov, dtype=float)
    scale = max(1.0, float(np.abs(cov).max()))
    if cov.shape != (grid.nodes.size, grid.nodes.size) or np.abs(cov - cov.T).max() > 1e-10 * scale:
        raise ValueError("covariance surface must be symmetric on the grid")
    ws = np.sqrt(grid.weights)
    m = ws[:, None] * cov * ws[None, :]
    m = (m + m.T) / 2.0
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    # drop negatives and relative round-off junk near the numerical rank
    top = vals[0] if vals.size else 0.0
    keep = vals > max(top, 0.0) * 1e-12
    vals = vals[keep]
    # C layout keeps downstream BLAS calls bit-reproducible after a
    # serialization round trip (LAPACK hands back Fortran order)
    funcs = np.ascontiguousarray(vecs[:, keep] / ws[:, None])
    for k in range(funcs.shape[1]):
        s = float(np.sum(grid.weights * funcs[:, k]))
        if s < 0:
            funcs[:, k] = -funcs[:, k]
        elif s == 0.0:
            nz = np.flatnonzero(funcs[:, k])
            if nz.size and funcs[nz[0], k] < 0:
                funcs[:, k] = -funcs[:, k]
    return vals, funcs


def select_p(eigenvalues, fve_threshold: float) -> int:
    """Smallest dimension reaching the explained-variance threshold."""
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0:
        raise DegenerateModelError("no positive eigenvalues")
    if not 0 < fve_threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {fve_threshold}")
    frac = np.cumsum(lam) / lam.sum()
    return int(np.searchsorted(frac, fve_threshold - 1e-12) + 1)


@dataclass(frozen=True)
class FpcaModel:
    """Fitted grid, mean, covariance, noise and retained eigenstructure."""

    grid: Grid
    mean: np.ndarray
    cov: np.ndarray
    sigma2: float
    eigenvalues: np.ndarray  # retained, descending
    eigenfunctions: np.ndarray  # (G, p), quadrature-orthonormal
    fve_threshold: float
    p: int
    total_variance: float
    fve_achieved: float
    bw_mean: float
    bw_cov: tuple[float, float]
    kernel: str = "epanechnikov"

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "sigma2": self.sigma2,
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenfunctions": self.eigenfunctions.tolist(),
            "fve_threshold": self.fve_threshold,
            "p": self.p,
            "total_variance": self.total_variance,
            "fve_achieved": self.fve_achieved,
            "smoothing": {"kernel": self.kernel, "bw_mean": self.bw_mean, "bw_cov": list(self.bw_cov)},
        }

    @staticmethod
    def from_dict(d: dict) -> "FpcaModel":
        return FpcaModel(
            grid=Grid.from_dict(d["grid"]),
            mean=np.asarray(d["mean"]),
            cov=np.asarray(d["cov"]),
            sigma2=d["sigma2"],
            eigenvalues=np.asarray(d["eigenvalues"]),
            eigenfunctions=np.asarray(d["eigenfunctions"]),
            fve_threshold=d["fve_threshold"],
            p=d["p"],
            total_variance=d["total_variance"],
            fve_achieved=d["fve_achieved"],
            bw_mean=d["smoothing"]["bw_mean"],
            bw_cov=tuple(d["smoothing"]["bw_cov"]),
            kernel=d["smoothing"]["kernel"],
        )


def fit_fpca(
    gridded: list[GriddedSubject],
    grid: Grid,
    fve: float = 0.95,
    bw_mean: float | None = None,
    bw_cov: tuple[float, float] | None = None,
) -> FpcaModel:
    """Full mean/covariance/noise/eigen pipeline on resampled subjects.

    Bandwidths default to GCV over a log ladder for the mean and twice
    the mean bandwidth per axis for the covariance surface.
    """
    a, b = grid.domain
    if bw_mean is None:
        xs = np.concatenate([grid.nodes[: g.n_nodes] for g in gridded])
        ys = np.concatenate([g.values for g in gridded])
        bw_mean = select_bandwidth_gcv(xs, ys, bandwidth_ladder(xs, b - a))
    mean = estimate_mean(gridded, grid, bw_mean)
    raw = raw_covariances(gridded, mean)
    if bw_cov is None:
        h = select_cov_bandwidth_gcv(raw, grid)
        bw_cov = (h, h)
    cov = smooth_cov_surface(raw, bw_cov, grid)
    sigma2 = estimate_sigma2(gridded, mean, cov, grid, bw_mean)
    vals, funcs = eigendecompose(cov, grid)
    p = select_p(vals, fve)
    total = float(vals.sum())
    # smoothing can leave the surface indefinite; the model keeps the
    # positive part so conditional scoring solves a PSD system
    cov_psd = (funcs * vals) @ funcs.T
    cov_psd = (cov_psd + cov_psd.T) / 2.0
    return FpcaModel(
        grid=grid,
        mean=mean,
        cov=cov_psd,
        sigma2=sigma2,
        eigenvalues=vals[:p].copy(),
        eigenfunctions=np.ascontiguousarray(funcs[:, :p]),
        fve_threshold=fve,
        p=p,
        total_variance=total,
        fve_achieved=float(vals[:p].sum() / total),
        bw_mean=float(bw_mean),
        bw_cov=(float(bw_cov[0]), float(bw_cov[1])),
    )


def scores_riemann(subject: GriddedSubject, model: FpcaModel) -> np.ndarray:
    """Riemann-sum score estimates over the subject's own nodes.

    The gap for the first node is taken as the grid step, as if a
    phantom node sat one step before the domain start.
    """
    m = subject.n_nodes
    t = model.grid.nodes[:m]
    gaps = np.empty(m)
    gaps[0] = model.grid.step
    gaps[1:] = np.diff(t)
    resid = subject.values - model.mean[:m]
    return (model.eigenfunctions[:m, :] * (resid * gaps)[:, None]).sum(axis=0)


def scores_conditional(subject: GriddedSubject, model: FpcaModel) -> np.ndarray:
    """Best-linear-prediction scores under joint Gaussianity.

    nu_m = lambda_m xi_m' Sigma_Y^{-1} (Y - mu) with Sigma_Y the fitted
    covariance at the subject's nodes plus sigma^2 on the diagonal. A
    ridge of 1e-8 * trace / m is added when the smallest eigenvalue
    drops below 1e-10 * trace.
    """
    m = subject.n_nodes
    sigma_y = model.cov[:m, :m] + model.sigma2 * np.eye(m)
    trace = float(np.trace(sigma_y))
    eig = np.linalg.eigvalsh(sigma_y)
    if eig[0] < 1e-10 * trace:
        sigma_y = sigma_y + (1e-8 * trace / m) * np.eye(m)
        eig = np.linalg.eigvalsh(sigma_y)
    if trace <= 0 or eig[0] <= 0:
        raise ConditioningError(
            f"subject {subject.subject_id!r}: covariance at the subject's nodes is singular"
        )
    resid = subject.values - model.mean[:m]
    solved = np.linalg.solve(sigma_y, resid)
    return model.eigenvalues * (model.eigenfunctions[:m, :].T @ solved)


def reconstruct(nu: np.ndarray, model: FpcaModel, t) -> float | np.ndarray:
    """Predicted trajectory mu(t) + sum_m nu_m xi_m(t), linearly interpolated."""
    nu = np.asarray(nu, dtype=float)
    if nu.size != model.p:
        raise DimensionError(f"expected {model.p} scores, got {nu.size}")
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    a, b = model.grid.domain
    if np.any(arr < a) or np.any(arr > b):
        raise DomainError(f"time outside model domain [{a}, {b}]")
    out = np.interp(arr, model.grid.nodes, model.mean)
    for k in range(model.p):
        out = out + nu[k] * np.interp(arr, model.grid.nodes, model.eigenfunctions[:, k])
    return out if np.ndim(t) else float(out[0])


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-subject score rows aligned with dataset order."""

    values: np.ndarray  # (N, p)
    subject_ids: tuple[str, ...]
    method: str


def scores_from_gridded(
    gridded: list[GriddedSubject], model: FpcaModel, method: str = "conditional"
) -> ScoreMatrix:
    """Score already-resampled subjects, preserving their order."""
    if method not in ("riemann", "conditional"):
        raise ValueError(f"unknown score method {method!r}")
    estimator = scores_conditional if method == "conditional" else scores_riemann
    rows = []
    for g in gridded:
        try:
            rows.append(estimator(g, model))
        except Exception as exc:
            raise type(exc)(f"subject {g.subject_id!r}: {exc}") from exc
    return ScoreMatrix(np.asarray(rows), tuple(g.subject_id for g in gridded), method)


def score_matrix(
    dataset: Dataset, curves: list[CfdCurve], model: FpcaModel, method: str = "conditional"
) -> ScoreMatrix:
    """Score every subject with the chosen estimator, in dataset order."""
    by_id = {c.subject_id: c for c in curves}
    missing = [s.subject_id for s in dataset.subjects if s.subject_id not in by_id]
    if missing:
        raise DimensionError(f"no curve for subjects {missing}")
    ordered = [by_id[s.subject_id] for s in dataset.subjects]
    gridded = resample_curves(ordered, model.grid)
    return scores_from_gridded(gridded, model, method)


class FunctionalPCA(BaseEstimator, TransformerMixin):
    """Scikit-learn style transformer from truncated curves to score rows.

    fit consumes a list of CfdCurve; transform returns the (n, p) score
    matrix. The grid spans ``domain`` (defaulting to the hull of the
    curves' domains) with step ``grid_step``.

    Attributes after fit: ``model_`` (the fitted FpcaModel) and ``grid_``.
    """

    def __init__(
        self,
        grid_step: float = 0.5,
        fve: float = 0.95,
        score_method: str = "conditional",
        bw_mean: float | None = None,
        bw_cov: tuple[float, float] | None = None,
        domain: tuple[float, float] | None = None,
    ):
        self.grid_step = grid_step
        self.fve = fve
        self.score_method = score_method
        self.bw_mean = bw_mean
        self.bw_cov = bw_cov
        self.domain = domain

    def fit(self, X, y=None):
        curves = list(X)
        if not curves:
            raise DimensionError("no curves to fit")
        domain = self.domain
        if domain is None:
            domain = (
                min(c.domain_start for c in curves),
                max(c.domain_end for c in curves),
            )
        self.grid_ = build_grid(domain, self.grid_step)
        gridded = resample_curves(curves, self.grid_)
        self.model_ = fit_fpca(
            gridded, self.grid_, fve=self.fve, bw_mean=self.bw_mean, bw_cov=self.bw_cov
        )
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        gridded = resample_curves(list(X), self.model_.grid)
        return scores_from_gridded(gridded, self.model_, self.score_method).values

    def inverse_transform(self, scores) -> np.ndarray:
        """Reconstructed trajectories on the grid, one row per score row."""
        check_is_fitted(self, "model_")
        scores = np.atleast_2d(np.asarray(scores, dtype=float))
        return np.vstack([reconstruct(nu, self.model_, self.model_.grid.nodes) for nu in scores])
