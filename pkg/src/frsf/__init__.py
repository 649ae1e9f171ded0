"""Survival forests on censored functional data.

Pipeline: per-subject curve reconstruction truncated at the follow-up
end, grid resampling, functional principal component scores (Riemann or
conditional-expectation), and a bootstrap ensemble of log-rank survival
trees with out-of-bag evaluation and permutation importance.
"""

from .basis import BasisConfig, CfdCurve, bspline_design, eval_curve, fit_cfd, ls_fit, select_k_loocv
from .data import Dataset, Observation, SubjectSeries, assemble_dataset, load_dataset
from .forest import (
    Forest,
    ForestParams,
    RandomSurvivalForest,
    VimpTable,
    ensemble_chf_ib,
    ensemble_chf_oob,
    fit_forest,
    oob_mortality,
    predict_mortality,
    vimp_permutation,
    vimp_table,
)
from .fpca import (
    FpcaModel,
    FunctionalPCA,
    Grid,
    GriddedSubject,
    ScoreMatrix,
    build_grid,
    eigendecompose,
    estimate_mean,
    estimate_sigma2,
    fit_fpca,
    quad_inner,
    raw_covariances,
    reconstruct,
    resample_curves,
    score_matrix,
    scores_conditional,
    scores_riemann,
    select_p,
    smooth_cov_surface,
)
from .metrics import EvaluationReport, brier_score, censoring_km, concordance_index, crps, evaluate_predictions
from .pipeline import FunctionalSurvivalForest
from .simulate import SimConfig, gen_dataset
from .smoothing import bandwidth_ladder, loclin_1d, loclin_2d, select_bandwidth_gcv
from .survival import RiskTable, StepFunction, kaplan_meier, logrank_stat, nelson_aalen, risk_table
from .tree import FeatureFrame, SurvivalTree, TreeParams, best_split, grow_tree, predict_chf, predict_survival

__version__ = "0.1.0"

__all__ = [
    "BasisConfig",
    "CfdCurve",
    "Dataset",
    "EvaluationReport",
    "FeatureFrame",
    "Forest",
    "ForestParams",
    "FpcaModel",
    "FunctionalPCA",
    "FunctionalSurvivalForest",
    "Grid",
    "GriddedSubject",
    "Observation",
    "RandomSurvivalForest",
    "RiskTable",
    "ScoreMatrix",
    "SimConfig",
    "StepFunction",
    "SubjectSeries",
    "SurvivalTree",
    "TreeParams",
    "VimpTable",
    "assemble_dataset",
    "bandwidth_ladder",
    "best_split",
    "brier_score",
    "bspline_design",
    "build_grid",
    "censoring_km",
    "concordance_index",
    "crps",
    "eigendecompose",
    "ensemble_chf_ib",
    "ensemble_chf_oob",
    "estimate_mean",
    "estimate_sigma2",
    "eval_curve",
    "evaluate_predictions",
    "fit_cfd",
    "fit_forest",
    "fit_fpca",
    "gen_dataset",
    "grow_tree",
    "kaplan_meier",
    "load_dataset",
    "loclin_1d",
    "loclin_2d",
    "logrank_stat",
    "ls_fit",
    "nelson_aalen",
    "oob_mortality",
    "predict_chf",
    "predict_mortality",
    "predict_survival",
    "quad_inner",
    "raw_covariances",
    "reconstruct",
    "resample_curves",
    "risk_table",
    "score_matrix",
    "scores_conditional",
    "scores_riemann",
    "select_bandwidth_gcv",
    "select_k_loocv",
    "select_p",
    "smooth_cov_surface",
    "vimp_permutation",
    "vimp_table",
]
