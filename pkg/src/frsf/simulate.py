"""Synthetic data with known mean, eigenstructure, noise and hazards.

Subjects get Gaussian scores on an analytically orthonormal eigenfamily,
exponential event times whose rate rises with the scores, and uniform
censoring, so every downstream estimate can be checked against ground
truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import Legendre

from .data import Dataset, Observation, assemble_dataset

MEAN_FAMILIES = ("constant", "sine", "polynomial")
EIGEN_FAMILIES = ("legendre", "fourier")


@dataclass(frozen=True)
class SimConfig:
    n_subjects: int = 100
    domain: tuple[float, float] = (0.0, 1.0)
    mean_family: str = "sine"
    mean_level: float = 2.0
    eigen_family: str = "fourier"
    lambdas: tuple[float, ...] = (2.0, 1.0)
    sigma2: float = 0.1
    scheme: str = "dense"  # "dense" or "sparse"
    dense_step: float = 0.05
    sparse_j_min: int = 2
    sparse_j_max: int = 5
    lambda0: float = 1.0
    gamma: tuple[float, ...] | None = None  # defaults to zeros
    c_max: float | None = None  # defaults to the domain end
    n_noise_covariates: int = 0  # iid N(0,1) columns unrelated to anything
    n_binary_noise_covariates: int = 0  # iid Bernoulli(1/2) columns, also unrelated
    seed: int = 0

    def __post_init__(self):
        a, b = self.domain
        if not a < b:
            raise ValueError("domain must satisfy a < b")
        if self.mean_family not in MEAN_FAMILIES:
            raise ValueError(f"mean_family must be one of {MEAN_FAMILIES}")
        if self.eigen_family not in EIGEN_FAMILIES:
            raise ValueError(f"eigen_family must be one of {EIGEN_FAMILIES}")
        if not 1 <= len(self.lambdas) <= 4:
            raise ValueError("between 1 and 4 eigencomponents supported")
        if any(l2 > l1 for l1, l2 in zip(self.lambdas, self.lambdas[1:])) or min(self.lambdas) <= 0:
            raise ValueError("lambdas must be positive and nonincreasing")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if self.scheme not in ("dense", "sparse"):
            raise ValueError("scheme must be dense or sparse")
        if self.gamma is not None and len(self.gamma) != len(self.lambdas):
            raise ValueError("gamma must have one entry per eigencomponent")
        cmax = self.c_max if self.c_max is not None else b
        if not a < cmax <= b:
            raise ValueError(f"c_max must lie in ({a}, {b}]")

    @property
    def gamma_vec(self) -> np.ndarray:
        return np.zeros(len(self.lambdas)) if self.gamma is None else np.asarray(self.gamma, float)

    @property
    def censor_max(self) -> float:
        return self.domain[1] if self.c_max is None else self.c_max


def mean_function(config: SimConfig):
    a, b = config.domain
    span = b - a
    if config.mean_family == "constant":
        return lambda t: np.full_like(np.asarray(t, dtype=float), config.mean_level)
    if config.mean_family == "sine":
        return lambda t: config.mean_level + np.sin(2 * np.pi * (np.asarray(t, float) - a) / span)
    # quadratic bump peaking mid-domain
    return lambda t: config.mean_level + 4.0 * ((np.asarray(t, float) - a) / span) * (
        1.0 - (np.asarray(t, float) - a) / span
    )


def eigen_functions(config: SimConfig):
    """Analytically orthonormal family on the domain, one per lambda."""
    a, b = config.domain
    span = b - a

    def u(t):
        return (np.asarray(t, dtype=float) - a) / span

    fns = []
    if config.eigen_family == "legendre":
        for m in range(len(config.lambdas)):
            poly = Legendre.basis(m)
            scale = np.sqrt((2 * m + 1) / span)
            fns.append(lambda t, poly=poly, scale=scale: scale * poly(2 * u(t) - 1))
    else:
        freqs = [(np.sin, 1), (np.cos, 1), (np.sin, 2), (np.cos, 2)]
        for m in range(len(config.lambdas)):
            trig, k = freqs[m]
            fns.append(
                lambda t, trig=trig, k=k: np.sqrt(2 / span) * trig(2 * np.pi * k * u(t))
            )
    return fns


@dataclass(frozen=True)
class GroundTruth:
    subject_ids: tuple[str, ...]
    scores: np.ndarray  # (N, M) true nu
    event_times: np.ndarray  # true T
    censor_times: np.ndarray  # true C

    def to_csv(self) -> str:
        m = self.scores.shape[1]
        header = "subject_id,true_event_time,true_censor_time," + ",".join(
            f"nu{k + 1}" for k in range(m)
        )
        rows = [header]
        for i, sid in enumerate(self.subject_ids):
            nus = ",".join(repr(float(v)) for v in self.scores[i])
            rows.append(f"{sid},{float(self.event_times[i])!r},{float(self.censor_times[i])!r},{nus}")
        return "\n".join(rows) + "\n"


def event_fraction_analytic(config: SimConfig) -> float:
    """P(T <= C) for gamma = 0: closed form of the exponential-uniform race."""
    a = config.domain[0]
    span_c = config.censor_max - a
    lam = config.lambda0
    return 1.0 - (1.0 - np.exp(-lam * span_c)) / (lam * span_c)


def gen_dataset(config: SimConfig) -> tuple[Dataset, GroundTruth]:
    """Draw scores, trajectories, outcomes and noisy observations."""
    rng = np.random.default_rng(config.seed)
    a, b = config.domain
    n = config.n_subjects
    m = len(config.lambdas)
    mu = mean_function(config)
    xis = eigen_functions(config)
    lam = np.asarray(config.lambdas)
    gamma = config.gamma_vec
    scores = rng.normal(0.0, np.sqrt(lam), size=(n, m))
    rates = config.lambda0 * np.exp(scores @ gamma)
    true_t = a + rng.exponential(1.0 / rates)
    true_c = rng.uniform(a, config.censor_max, n)
    t_star = np.minimum(true_t, true_c)
    delta = true_t <= true_c
    noise_sd = np.sqrt(config.sigma2)
    cov_names = tuple(f"noise{k + 1}" for k in range(config.n_noise_covariates)) + tuple(
        f"bnoise{k + 1}" for k in range(config.n_binary_noise_covariates)
    )
    noise_covs = np.column_stack(
        [
            rng.normal(size=(n, config.n_noise_covariates)),
            rng.integers(0, 2, size=(n, config.n_binary_noise_covariates)).astype(float),
        ]
    )
    width = len(str(n))
    obs_map: dict[str, list[Observation]] = {}
    outcome_map: dict[str, tuple[float, bool, dict[str, float]]] = {}
    ids = []
    for i in range(n):
        sid = f"s{i + 1:0{width}d}"
        ids.append(sid)
        end = float(t_star[i])
        if config.scheme == "dense":
            times = [a]
            k = 1
            while a + k * config.dense_step <= end:
                times.append(a + k * config.dense_step)
                k += 1
        else:
            j = int(rng.integers(config.sparse_j_min, config.sparse_j_max + 1))
            extra: set[float] = set()
            while len(extra) < j - 1 and end > a:
                draw = float(rng.uniform(a, end))
                if draw != a:
                    extra.add(draw)
            times = [a] + sorted(extra)
        times = np.asarray(times)
        x_vals = mu(times) + sum(scores[i, k] * xis[k](times) for k in range(m))
        y_vals = x_vals + (rng.normal(0.0, noise_sd, times.size) if noise_sd > 0 else 0.0)
        obs_map[sid] = [Observation(float(t), float(v)) for t, v in zip(times, y_vals)]
        covs = {name: float(noise_covs[i, k]) for k, name in enumerate(cov_names)}
        outcome_map[sid] = (end, bool(delta[i]), covs)
    dataset = assemble_dataset(obs_map, outcome_map, domain=(a, b), covariate_names=cov_names)
    truth = GroundTruth(tuple(ids), scores, true_t, true_c)
    return dataset, truth
