"""Local linear kernel smoothers (1-D and 2-D) with Epanechnikov weights.

The local polynomial is parameterized in kernel units u = (x - x0)/bw, so
the normal-equation matrices stay well scaled at any bandwidth; the
returned intercept is unaffected. Nodes whose kernel support is deficient
escalate their bandwidth by doubling, up to `MAX_DOUBLINGS` times.

Duplicate sample locations may be pre-aggregated and passed through the
`counts` argument; kernel weights are multiplied by the counts, which is
algebraically identical to repeating the points.
"""

from __future__ import annotations

import numpy as np

from .exceptions import BandwidthSelectionError, SparseSupportError

MAX_DOUBLINGS = 10
_RELTOL = 1e-9


def epanechnikov(u: np.ndarray) -> np.ndarray:
    """0.75 (1 - u^2) on |u| < 1, else 0."""
    u = np.asarray(u)
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


def _solve_loclin_1d(dx, y, w, bw):
    """Weighted line fit in kernel units; returns (intercept, ok)."""
    u = dx / bw
    s0 = w.sum()
    s1 = (w * u).sum()
    s2 = (w * u * u).sum()
    t0 = (w * y).sum()
    t1 = (w * u * y).sum()
    den = s0 * s2 - s1 * s1
    # eigenvalue bound for the 2x2 moment matrix: singular -> escalate
    if den <= _RELTOL * max(s0, s2) ** 2:
        return 0.0, False
    return (s2 * t0 - s1 * t1) / den, True


def loclin_1d(x, y, bw, eval_points, counts=None):
    """Local linear smooth of scatter (x, y) at each eval point.

    Returns the fitted intercepts. At eval points where fewer than two
    distinct x fall inside the kernel support, the bandwidth is doubled
    locally until the fit is solvable; after MAX_DOUBLINGS failures a
    SparseSupportError is raised.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise SparseSupportError("need at least 2 points to smooth")
    if bw <= 0:
        raise ValueError(f"bandwidth must be positive, got {bw}")
    c = np.ones_like(x) if counts is None else np.asarray(counts, dtype=float)
    out = np.empty(len(eval_points))
    for k, t in enumerate(np.asarray(eval_points, dtype=float)):
        dx = x - t
        h = bw
        for _ in range(MAX_DOUBLINGS + 1):
            w = epanechnikov(dx / h) * c
            live = w > 0
            if np.unique(dx[live]).size >= 2:
                val, ok = _solve_loclin_1d(dx[live], y[live], w[live], h)
                if ok:
                    out[k] = val
                    break
            h *= 2.0
        else:
            raise SparseSupportError(f"kernel support at t={t} deficient after {MAX_DOUBLINGS} doublings")
    return out


def _solve_loclin_2d(ds, dt, v, w, h1, h2):
    """Weighted plane fit in kernel units; returns (intercept, ok)."""
    u1 = ds / h1
    u2 = dt / h2
    X = np.column_stack([np.ones_like(u1), u1, u2])
    wx = X * w[:, None]
    A = X.T @ wx
    b = wx.T @ v
    eig = np.linalg.eigvalsh(A)
    if eig[0] <= _RELTOL * max(eig[-1], 0.0):
        return 0.0, False
    return float(np.linalg.solve(A, b)[0]), True


def loclin_2d(pts, values, bw, grid, counts=None):
    """Local plane smooth of a 2-D scatter onto a rectangular grid.

    pts: (n, 2) array of (s, t) coordinates; bw: (h1, h2); grid:
    (s_grid, t_grid). Returns a matrix of shape (len(s_grid), len(t_grid))
    holding the fitted intercepts. Nodes needing more support escalate
    both bandwidths together.
    """
    pts = np.asarray(pts, dtype=float)
    values = np.asarray(values, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] != values.size or pts.shape[0] < 3:
        raise SparseSupportError("need at least 3 (s,t,value) points to smooth a surface")
    h1, h2 = bw
    if h1 <= 0 or h2 <= 0:
        raise ValueError(f"bandwidths must be positive, got {bw}")
    c = np.ones(pts.shape[0]) if counts is None else np.asarray(counts, dtype=float)
    s_grid, t_grid = (np.asarray(g, dtype=float) for g in grid)
    order = np.argsort(pts[:, 0], kind="stable")
    ps, pt, pv, pc = pts[order, 0], pts[order, 1], values[order], c[order]
    out = np.empty((s_grid.size, t_grid.size))
    for i, s0 in enumerate(s_grid):
        for j, t0 in enumerate(t_grid):
            out[i, j] = _loclin_2d_node(ps, pt, pv, pc, s0, t0, h1, h2)
    return out


def _loclin_2d_node(ps, pt, pv, pc, s0, t0, h1, h2):
    """One surface node with escalation; ps must be sorted ascending."""
    g1, g2 = h1, h2
    for _ in range(MAX_DOUBLINGS + 1):
        lo = np.searchsorted(ps, s0 - g1, side="right")
        hi = np.searchsorted(ps, s0 + g1, side="left")
        ds = ps[lo:hi] - s0
        dt = pt[lo:hi] - t0
        w = epanechnikov(ds / g1) * epanechnikov(dt / g2) * pc[lo:hi]
        live = w > 0
        if np.unique(np.column_stack([ds[live], dt[live]]), axis=0).shape[0] >= 3:
            val, ok = _solve_loclin_2d(ds[live], dt[live], pv[lo:hi][live], w[live], g1, g2)
            if ok:
                return val
        g1 *= 2.0
        g2 *= 2.0
    raise SparseSupportError(f"kernel support at ({s0}, {t0}) deficient after {MAX_DOUBLINGS} doublings")


def gcv_score(x, y, bw):
    """Generalized cross-validation score n*RSS / (n - trace(S))^2.

    Fits are computed once per distinct x; duplicates enter RSS and the
    smoother trace through their multiplicities.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ux, inverse = np.unique(x, return_inverse=True)
    c = np.ones_like(x)
    # aggregate duplicates: count and mean response per location
    n = float(c.sum())
    agg_c = np.zeros_like(ux)
    agg_sum = np.zeros_like(ux)
    np.add.at(agg_c, inverse, c)
    np.add.at(agg_sum, inverse, c * y)
    agg_mean = agg_sum / agg_c
    fitted = np.empty_like(ux)
    trace = 0.0
    k0 = epanechnikov(np.zeros(1))[0]
    for k, t in enumerate(ux):
        dx = ux - t
        w = epanechnikov(dx / bw) * agg_c
        live = w > 0
        if np.unique(dx[live]).size < 2:
            raise SparseSupportError(f"GCV support at x={t} deficient")
        u = dx[live] / bw
        w_ = w[live]
        s0, s1, s2 = w_.sum(), (w_ * u).sum(), (w_ * u * u).sum()
        den = s0 * s2 - s1 * s1
        if den <= _RELTOL * max(s0, s2) ** 2:
            raise SparseSupportError(f"GCV design singular at x={t}")
        fitted[k] = (s2 * (w_ * agg_mean[live]).sum() - s1 * (w_ * u * agg_mean[live]).sum()) / den
        # own-point leverage: weight of one copy of y_k in fitted(x_k)
        trace += agg_c[k] * k0 * s2 / den
    # RSS over all raw points; within-location spread adds a fit-independent term
    rss = float(np.sum(c * (y - fitted[inverse]) ** 2))
    dof = n - trace
    if dof <= 0:
        return np.inf
    return n * rss / dof**2


def select_bandwidth_gcv(x, y, candidates):
    """Pick the GCV-minimizing bandwidth; ties go to the smaller value."""
    cands = sorted(float(h) for h in candidates)
    if not cands:
        raise BandwidthSelectionError("no bandwidth candidates")
    best = None
    best_score = np.inf
    any_ok = False
    for h in cands:
        try:
            score = gcv_score(x, y, h)
        except SparseSupportError:
            continue
        any_ok = True
        if score < best_score:
            best, best_score = h, score
    if not any_ok:
        raise BandwidthSelectionError("every candidate bandwidth had deficient support")
    return best


def bandwidth_ladder(x, domain_length, n=10):
    """Logarithmic bandwidth ladder from 1.5x the median gap between
    distinct sorted locations up to a quarter of the domain length."""
    ux = np.unique(np.asarray(x, dtype=float))
    hi = domain_length / 4.0
    if hi <= 0:
        raise ValueError("domain length must be positive")
    if ux.size < 2:
        return [hi]
    lo = 1.5 * float(np.median(np.diff(ux)))
    if lo <= 0 or lo >= hi:
        return [hi]
    return list(np.geomspace(lo, hi, n))
