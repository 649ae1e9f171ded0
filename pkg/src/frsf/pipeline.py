"""End-to-end model: truncated curve fits, score extraction, forest.

Two feature routes are supported. The default ("cfd") reconstructs each
subject's curve before resampling on the grid; the raw route ("std")
skips reconstruction and carries the last observation forward to the
grid nodes, which is the natural featurization of the unreconstructed
records and serves as the comparison arm.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .basis import BasisConfig, CfdCurve, fit_cfd
from .data import Dataset, SubjectSeries
from .exceptions import SchemaError, UndefinedConcordanceError
from .forest import (
    Forest,
    ForestParams,
    ensemble_chf_ib,
    ensemble_survival_oob,
    fit_forest,
    oob_mortality,
    predict_mortality,
    vimp_table,
)
from .fpca import (
    FpcaModel,
    GriddedSubject,
    build_grid,
    fit_fpca,
    resample_curves,
    scores_from_gridded,
)
from .metrics import EvaluationReport, concordance_index, evaluate_predictions
from .survival import StepFunction
from .tree import FeatureFrame

CURVE_MODES = ("cfd", "std")


def step_gridded(series: SubjectSeries, grid) -> GriddedSubject:
    """Raw observations carried forward to the grid nodes up to T*.

    Nodes before the first observation take the first value (backfill);
    later nodes take the most recent observation.
    """
    m = int(np.searchsorted(grid.nodes, series.event_time, side="right"))
    m = max(m, 1)
    nodes = grid.nodes[:m]
    times = np.asarray(series.times)
    values = np.asarray(series.values)
    idx = np.searchsorted(times, nodes, side="right") - 1
    idx = np.clip(idx, 0, times.size - 1)
    return GriddedSubject(series.subject_id, m, values[idx], series.event_time, series.event)


def oob_error_curve(forest: Forest, frame: FeatureFrame) -> list[tuple[int, float]]:
    """Out-of-bag error (1 - concordance) after each tree joins the ensemble."""
    from .forest import _flatten, _leaf_mortality, _route_many

    sums = np.zeros(frame.n)
    counts = np.zeros(frame.n)
    curve = []
    for b, tree in enumerate(forest.trees):
        rows = np.flatnonzero(forest.oob[b])
        if rows.size:
            leaves = _route_many(_flatten(tree), frame.X[rows])
            sums[rows] += _leaf_mortality(tree, forest.event_times)[leaves]
            counts[rows] += 1.0
        covered = counts > 0
        if not covered.any() or frame.events[covered].sum() == 0:
            curve.append((b + 1, float("nan")))
            continue
        try:
            c, _ = concordance_index(
                sums[covered] / counts[covered], frame.times[covered], frame.events[covered]
            )
            curve.append((b + 1, 1.0 - c))
        except UndefinedConcordanceError:
            curve.append((b + 1, float("nan")))
    return curve


class FunctionalSurvivalForest(BaseEstimator):
    """Dataset-in, risk-out estimator composing the whole pipeline.

    Attributes after fit: ``grid_``, ``model_`` (FpcaModel), ``frame_``
    (FeatureFrame of scores plus covariates), ``forest_``, ``curves_``
    (cfd mode only).
    """

    def __init__(
        self,
        grid_step: float = 0.5,
        fve: float = 0.95,
        score_method: str = "conditional",
        curve_mode: str = "cfd",
        basis_order: int = 4,
        basis_k_max: int = 15,
        bw_mean: float | None = None,
        bw_cov: tuple[float, float] | None = None,
        n_trees: int = 100,
        mtry: int | None = None,
        min_node_events: int = 1,
        min_node_size: int = 6,
        max_depth: int | None = None,
        n_split_candidates: int = 10,
        seed: int = 0,
    ):
        self.grid_step = grid_step
        self.fve = fve
        self.score_method = score_method
        self.curve_mode = curve_mode
        self.basis_order = basis_order
        self.basis_k_max = basis_k_max
        self.bw_mean = bw_mean
        self.bw_cov = bw_cov
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_node_events = min_node_events
        self.min_node_size = min_node_size
        self.max_depth = max_depth
        self.n_split_candidates = n_split_candidates
        self.seed = seed

    # -- fitting -------------------------------------------------------

    def _basis_config(self) -> BasisConfig:
        return BasisConfig(order=self.basis_order, k_max=self.basis_k_max)

    def _gridded(self, dataset: Dataset, grid):
        if self.curve_mode == "cfd":
            cfg = self._basis_config()
            curves = [fit_cfd(s, cfg, domain_start=dataset.domain[0]) for s in dataset.subjects]
            events = {s.subject_id: s.event for s in dataset.subjects}
            return curves, resample_curves(curves, grid, events=events)
        if self.curve_mode == "std":
            return None, [step_gridded(s, grid) for s in dataset.subjects]
        raise ValueError(f"curve_mode must be one of {CURVE_MODES}")

    def fit(self, dataset: Dataset, y=None):
        grid = build_grid(dataset.domain, self.grid_step)
        curves, gridded = self._gridded(dataset, grid)
        self.grid_ = grid
        self.curves_ = curves
        self.model_ = fit_fpca(
            gridded, grid, fve=self.fve, bw_mean=self.bw_mean, bw_cov=self.bw_cov
        )
        scores = scores_from_gridded(gridded, self.model_, self.score_method)
        self.covariate_names_ = tuple(dataset.covariate_names)
        names = tuple(f"PC{k + 1}" for k in range(self.model_.p)) + self.covariate_names_
        cov_cols = np.asarray(
            [[s.covariates[c] for c in self.covariate_names_] for s in dataset.subjects]
        ).reshape(dataset.n, len(self.covariate_names_))
        X = np.hstack([scores.values, cov_cols])
        self.frame_ = FeatureFrame(
            names,
            X,
            np.asarray(dataset.event_times(), dtype=float),
            np.asarray(dataset.event_indicators(), dtype=int),
            tuple(dataset.subject_ids),
        )
        self.forest_ = fit_forest(self.frame_, self._forest_params())
        return self

    def _forest_params(self) -> ForestParams:
        return ForestParams(
            n_trees=self.n_trees,
            mtry=self.mtry,
            min_node_events=self.min_node_events,
            min_node_size=self.min_node_size,
            max_depth=self.max_depth,
            n_split_candidates=self.n_split_candidates,
            seed=self.seed,
        )

    # -- prediction ----------------------------------------------------

    def features_for(self, dataset: Dataset) -> np.ndarray:
        """Score new subjects through the persisted model, append covariates."""
        check_is_fitted(self, "forest_")
        if set(dataset.covariate_names) != set(self.covariate_names_):
            raise SchemaError(
                f"covariates {sorted(dataset.covariate_names)} do not match "
                f"training covariates {sorted(self.covariate_names_)}"
            )
        if dataset.n == 0:
            return np.zeros((0, len(self.frame_.names)))
        if self.curve_mode == "cfd":
            cfg = self._basis_config()
            curves = [fit_cfd(s, cfg, domain_start=self.grid_.domain[0]) for s in dataset.subjects]
            gridded = resample_curves(curves, self.model_.grid)
        else:
            gridded = [step_gridded(s, self.model_.grid) for s in dataset.subjects]
        scores = scores_from_gridded(gridded, self.model_, self.score_method)
        cov_cols = np.asarray(
            [[s.covariates[c] for c in self.covariate_names_] for s in dataset.subjects]
        ).reshape(dataset.n, len(self.covariate_names_))
        return np.hstack([scores.values, cov_cols])

    def predict(self, dataset: Dataset) -> np.ndarray:
        """In-bag ensemble mortality for each subject of the dataset."""
        X = self.features_for(dataset)
        return np.asarray(
            [predict_mortality(ensemble_chf_ib(self.forest_, x), self.forest_.event_times) for x in X]
        )

    def predict_survival_function(self, dataset: Dataset) -> list[StepFunction]:
        from .forest import average_step_functions

        X = self.features_for(dataset)
        return [
            average_step_functions([t.nodes[t.route(x)].surv for t in self.forest_.trees])
            for x in X
        ]

    # -- evaluation ----------------------------------------------------

    def oob_report(self, config: dict | None = None) -> EvaluationReport:
        """Out-of-bag concordance, Brier curve and CRPS on the training data."""
        check_is_fitted(self, "forest_")
        mort, covered = oob_mortality(self.forest_, self.frame_)
        rows = np.flatnonzero(covered)
        surv_fns = [ensemble_survival_oob(self.forest_, self.frame_, int(i)) for i in rows]
        echo = {
            "grid_step": self.grid_step,
            "fve": self.fve,
            "score_method": self.score_method,
            "curve_mode": self.curve_mode,
            "p": self.model_.p,
            "fve_achieved": self.model_.fve_achieved,
            "sigma2": self.model_.sigma2,
            "kernel": self.model_.kernel,
            "bw_mean": self.model_.bw_mean,
            "bw_cov": list(self.model_.bw_cov),
            "n_trees": self.n_trees,
            "mtry": self.forest_.params.mtry,
            "seed": self.seed,
        }
        ks = [c.k_selected for c in self.curves_ or [] if c.kind == "spline"]
        if ks:
            echo["spline_k"] = {"min": int(min(ks)), "max": int(max(ks)), "mean": float(np.mean(ks))}
        echo.update(config or {})
        return evaluate_predictions(
            mort[rows],
            surv_fns,
            self.frame_.times[rows],
            self.frame_.events[rows],
            config=echo,
        )

    def variable_importance(self, n_repeats: int = 10, seed: int = 0):
        check_is_fitted(self, "forest_")
        return vimp_table(self.forest_, self.frame_, n_repeats=n_repeats, seed=seed)

    def oob_error_curve(self) -> list[tuple[int, float]]:
        check_is_fitted(self, "forest_")
        return oob_error_curve(self.forest_, self.frame_)

    # -- persistence ---------------------------------------------------

    def to_dict(self) -> dict:
        check_is_fitted(self, "forest_")
        d = {
            "config": self.get_params(),
            "covariate_names": list(self.covariate_names_),
            "model": self.model_.to_dict(),
            "forest": self.forest_.to_dict(),
            "frame": {
                "names": list(self.frame_.names),
                "X": self.frame_.X.tolist(),
                "times": self.frame_.times.tolist(),
                "events": self.frame_.events.tolist(),
                "subject_ids": list(self.frame_.subject_ids),
            },
        }
        if self.curves_ is not None:
            d["curves"] = [c.to_dict() for c in self.curves_]
        return d

    @staticmethod
    def from_dict(d: dict) -> "FunctionalSurvivalForest":
        est = FunctionalSurvivalForest(**{
            k: (tuple(v) if isinstance(v, list) else v) for k, v in d["config"].items()
        })
        est.covariate_names_ = tuple(d["covariate_names"])
        est.model_ = FpcaModel.from_dict(d["model"])
        est.grid_ = est.model_.grid
        est.forest_ = Forest.from_dict(d["forest"])
        fr = d["frame"]
        est.frame_ = FeatureFrame(
            tuple(fr["names"]),
            np.asarray(fr["X"], dtype=float),
            np.asarray(fr["times"], dtype=float),
            np.asarray(fr["events"], dtype=int),
            tuple(fr["subject_ids"]),
        )
        est.curves_ = (
            [CfdCurve.from_dict(c) for c in d["curves"]] if "curves" in d else None
        )
        return est
