"""Bootstrap ensembles of log-rank survival trees.

Every tree trains on a with-replacement resample of the subjects; the
subjects a tree never saw (its out-of-bag set) provide honest error
estimates. Risk ranking uses the mortality score: the ensemble
cumulative hazard summed over the training event times. Permutation
importance shuffles one feature's out-of-bag values within each tree
and measures the damage to the out-of-bag error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import CoverageError, UnlearnableError
from .metrics import concordance_index
from .survival import StepFunction
from .tree import FeatureFrame, LeafNode, SurvivalTree, TreeParams, grow_tree, predict_chf


@dataclass(frozen=True)
class ForestParams:
    """Ensemble controls; mtry=None means ceil(sqrt(#features))."""

    n_trees: int = 100
    mtry: int | None = None
    min_node_events: int = 1
    min_node_size: int = 6
    max_depth: int | None = None
    n_split_candidates: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "mtry": self.mtry,
            "min_node_events": self.min_node_events,
            "min_node_size": self.min_node_size,
            "max_depth": self.max_depth,
            "n_split_candidates": self.n_split_candidates,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "ForestParams":
        return ForestParams(**d)


@dataclass(frozen=True)
class Forest:
    trees: tuple[SurvivalTree, ...]
    inbag: tuple[np.ndarray, ...]  # sorted bootstrap index multisets
    oob: np.ndarray  # (B, N) bool
    feature_names: tuple[str, ...]
    event_times: np.ndarray  # distinct training event times
    n_subjects: int
    params: ForestParams

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "feature_names": list(self.feature_names),
            "event_times": self.event_times.tolist(),
            "n_subjects": self.n_subjects,
            "inbag": [ix.tolist() for ix in self.inbag],
            "trees": [t.to_dict() for t in self.trees],
        }

    @staticmethod
    def from_dict(d: dict) -> "Forest":
        n = d["n_subjects"]
        inbag = tuple(np.asarray(ix, dtype=int) for ix in d["inbag"])
        oob = np.ones((len(inbag), n), dtype=bool)
        for b, ix in enumerate(inbag):
            oob[b, ix] = False
        return Forest(
            trees=tuple(SurvivalTree.from_dict(t) for t in d["trees"]),
            inbag=inbag,
            oob=oob,
            feature_names=tuple(d["feature_names"]),
            event_times=np.asarray(d["event_times"], dtype=float),
            n_subjects=n,
            params=ForestParams.from_dict(d["params"]),
        )


def fit_forest(frame: FeatureFrame, params: ForestParams) -> Forest:
    """Grow the bootstrap ensemble.

    Tree b draws its bootstrap from stream (seed, b, 0) and its growth
    randomness from (seed, b, 1); a bootstrap with zero events is redrawn
    up to 100 times before giving up.
    """
    n = frame.n
    if n == 0 or int(frame.events.sum()) < 1:
        raise UnlearnableError("training data must contain at least one event")
    q = params.mtry if params.mtry is not None else math.ceil(math.sqrt(frame.n_features))
    q = min(q, frame.n_features)
    trees = []
    inbag = []
    oob = np.zeros((params.n_trees, n), dtype=bool)
    for b in range(params.n_trees):
        rng = np.random.default_rng((params.seed, b, 0))
        for _ in range(100):
            idx = rng.integers(0, n, size=n)
            if frame.events[idx].sum() >= 1:
                break
        else:
            raise UnlearnableError(f"bootstrap {b}: no events after 100 redraws")
        idx = np.sort(idx)
        tree_params = TreeParams(
            mtry=q,
            min_node_events=params.min_node_events,
            min_node_size=params.min_node_size,
            max_depth=params.max_depth,
            n_split_candidates=params.n_split_candidates,
            seed=(params.seed, b, 1),
        )
        trees.append(grow_tree(frame.take(idx), tree_params))
        inbag.append(idx)
        oob[b] = np.bincount(idx, minlength=n) == 0
    uncovered = int(np.sum(~oob.any(axis=0)))
    if uncovered and params.n_trees >= 20:
        warnings.warn(
            f"{uncovered} subject(s) were in-bag for every tree; "
            "out-of-bag estimates will skip them (consider more trees)",
            stacklevel=2,
        )
    event_times = np.unique(frame.times[frame.events == 1])
    return Forest(
        trees=tuple(trees),
        inbag=tuple(inbag),
        oob=oob,
        feature_names=frame.names,
        event_times=event_times,
        n_subjects=n,
        params=params,
    )


def average_step_functions(fns: list[StepFunction]) -> StepFunction:
    """Pointwise mean on the merged knot set, in index order."""
    knots = np.unique(np.concatenate([f.knots for f in fns]))
    if knots.size == 0:
        return StepFunction(knots, np.zeros(0), float(np.mean([f.left_value for f in fns])))
    values = np.mean([f(knots) for f in fns], axis=0)
    left = float(np.mean([f.left_value for f in fns]))
    return StepFunction(knots, values, left)


def ensemble_chf_ib(forest: Forest, x) -> StepFunction:
    """All-trees average cumulative hazard for a feature vector."""
    return average_step_functions([predict_chf(t, x) for t in forest.trees])


def ensemble_chf_oob(forest: Forest, frame: FeatureFrame, i: int) -> StepFunction:
    """Average cumulative hazard over exactly the trees where i is out-of-bag."""
    fns = [predict_chf(t, frame.X[i]) for b, t in enumerate(forest.trees) if forest.oob[b, i]]
    if not fns:
        raise CoverageError(f"subject index {i} is in-bag for every tree; increase n_trees")
    return average_step_functions(fns)


def ensemble_survival_oob(forest: Forest, frame: FeatureFrame, i: int) -> StepFunction:
    """Average survival curve over the out-of-bag trees for subject i."""
    fns = [
        forest.trees[b].nodes[forest.trees[b].route(frame.X[i])].surv
        for b in range(forest.n_trees)
        if forest.oob[b, i]
    ]
    if not fns:
        raise CoverageError(f"subject index {i} is in-bag for every tree; increase n_trees")
    return average_step_functions(fns)


def predict_mortality(chf: StepFunction, eval_times) -> float:
    """Risk score: the cumulative hazard summed over the evaluation times."""
    eval_times = np.asarray(eval_times, dtype=float)
    if eval_times.size == 0:
        raise ValueError("eval_times must be nonempty")
    return float(np.sum(chf(eval_times)))


def _flatten(tree: SurvivalTree):
    """Arrays for vectorized routing plus per-node mortality lookups."""
    n = len(tree.nodes)
    feat = np.zeros(n, dtype=int)
    thr = np.zeros(n)
    left = np.zeros(n, dtype=int)
    right = np.zeros(n, dtype=int)
    is_leaf = np.zeros(n, dtype=bool)
    for k, node in enumerate(tree.nodes):
        if isinstance(node, LeafNode):
            is_leaf[k] = True
        else:
            feat[k], thr[k], left[k], right[k] = node.feature, node.threshold, node.left, node.right
    return feat, thr, left, right, is_leaf


def _route_many(flat, X) -> np.ndarray:
    feat, thr, left, right, is_leaf = flat
    cur = np.zeros(X.shape[0], dtype=int)
    while True:
        alive = ~is_leaf[cur]
        if not alive.any():
            return cur
        ids = cur[alive]
        rows = np.flatnonzero(alive)
        go_left = X[rows, feat[ids]] <= thr[ids]
        cur[rows] = np.where(go_left, left[ids], right[ids])


def _leaf_mortality(tree: SurvivalTree, eval_times: np.ndarray) -> np.ndarray:
    out = np.zeros(len(tree.nodes))
    for k, node in enumerate(tree.nodes):
        if isinstance(node, LeafNode):
            out[k] = float(np.sum(node.chf(eval_times)))
    return out


def oob_mortality(forest: Forest, frame: FeatureFrame) -> tuple[np.ndarray, np.ndarray]:
    """Per-subject out-of-bag mortality and the coverage mask.

    Uncovered subjects (in-bag everywhere) get NaN.
    """
    sums = np.zeros(frame.n)
    counts = np.zeros(frame.n)
    for b, tree in enumerate(forest.trees):
        rows = np.flatnonzero(forest.oob[b])
        if rows.size == 0:
            continue
        leaves = _route_many(_flatten(tree), frame.X[rows])
        sums[rows] += _leaf_mortality(tree, forest.event_times)[leaves]
        counts[rows] += 1.0
    covered = counts > 0
    mort = np.full(frame.n, np.nan)
    mort[covered] = sums[covered] / counts[covered]
    return mort, covered


def _oob_error(mortality, covered, frame: FeatureFrame) -> float:
    c, _ = concordance_index(mortality[covered], frame.times[covered], frame.events[covered])
    return 1.0 - c


def vimp_permutation(
    forest: Forest,
    frame: FeatureFrame,
    feature: str,
    n_repeats: int = 10,
    seed: int = 0,
    _context=None,
) -> float:
    """Breiman-Cutler importance of one feature.

    Within each tree the feature's out-of-bag values are shuffled (other
    columns untouched), the out-of-bag error is recomputed, and the mean
    excess over the baseline error across repeats is returned. The
    shuffle for tree b in repeat r comes from stream (seed, b, r).
    """
    if feature not in forest.feature_names:
        raise KeyError(f"unknown feature {feature!r}")
    fidx = forest.feature_names.index(feature)
    if _context is None:
        _context = _vimp_context(forest, frame)
    flats, leaf_mort, base_mort, covered, e0 = _context
    deltas = []
    for rep in range(n_repeats):
        sums = np.zeros(frame.n)
        counts = np.zeros(frame.n)
        for b, tree in enumerate(forest.trees):
            rows = np.flatnonzero(forest.oob[b])
            if rows.size == 0:
                continue
            perm = np.random.default_rng((seed, b, rep)).permutation(rows.size)
            xb = frame.X[rows].copy()
            xb[:, fidx] = xb[perm, fidx]
            leaves = _route_many(flats[b], xb)
            sums[rows] += leaf_mort[b][leaves]
            counts[rows] += 1.0
        mort = np.full(frame.n, np.nan)
        mort[covered] = sums[covered] / counts[covered]
        deltas.append(_oob_error(mort, covered, frame) - e0)
    return float(np.mean(deltas))


def _vimp_context(forest: Forest, frame: FeatureFrame):
    flats = [_flatten(t) for t in forest.trees]
    leaf_mort = [_leaf_mortality(t, forest.event_times) for t in forest.trees]
    base_mort, covered = oob_mortality(forest, frame)
    e0 = _oob_error(base_mort, covered, frame)
    return flats, leaf_mort, base_mort, covered, e0


@dataclass(frozen=True)
class VimpTable:
    """Feature importances sorted descending, with relative importance."""

    rows: tuple[tuple[str, float, float], ...]  # (feature, importance, relative)
    undefined_relative: bool = False

    def to_csv(self) -> str:
        lines = ["feature,importance,relative_importance"]
        for name, imp, rel in self.rows:
            lines.append(f"{name},{imp!r},{rel!r}")
        return "\n".join(lines) + "\n"

    def ranking(self) -> list[str]:
        return [name for name, _, _ in self.rows]


def vimp_table(forest: Forest, frame: FeatureFrame, n_repeats: int = 10, seed: int = 0) -> VimpTable:
    """Permutation importance for every feature, shared baseline."""
    context = _vimp_context(forest, frame)
    imps = [
        vimp_permutation(forest, frame, name, n_repeats=n_repeats, seed=seed, _context=context)
        for name in forest.feature_names
    ]
    imps = np.asarray(imps)
    max_imp = imps.max() if imps.size else 0.0
    undefined = max_imp <= 0.0
    rel = np.full_like(imps, np.nan) if undefined else imps / max_imp
    order = np.argsort(-imps, kind="stable")
    rows = tuple(
        (forest.feature_names[k], float(imps[k]), float(rel[k])) for k in order
    )
    return VimpTable(rows=rows, undefined_relative=bool(undefined))


class RandomSurvivalForest(BaseEstimator):
    """Ensemble survival estimator over a plain feature matrix.

    Parameters mirror ForestParams. fit expects X of shape (n, f) and
    y as a (times, events) pair or an (n, 2) array with the event
    indicator in the second column.

    Attributes after fit: `forest_`, `frame_`, `oob_mortality_`,
    `oob_cindex_`.
    """

    def __init__(
        self,
        n_trees: int = 100,
        mtry: int | None = None,
        min_node_events: int = 1,
        min_node_size: int = 6,
        max_depth: int | None = None,
        n_split_candidates: int = 10,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_node_events = min_node_events
        self.min_node_size = min_node_size
        self.max_depth = max_depth
        self.n_split_candidates = n_split_candidates
        self.seed = seed

    def _params(self) -> ForestParams:
        return ForestParams(
            n_trees=self.n_trees,
            mtry=self.mtry,
            min_node_events=self.min_node_events,
            min_node_size=self.min_node_size,
            max_depth=self.max_depth,
            n_split_candidates=self.n_split_candidates,
            seed=self.seed,
        )

    def fit(self, X, y, feature_names=None):
        X = check_array(X, ensure_min_samples=2)
        if isinstance(y, tuple) and len(y) == 2:
            times, events = y
        else:
            y = check_array(y, ensure_2d=True)
            times, events = y[:, 0], y[:, 1]
        names = tuple(feature_names) if feature_names else tuple(f"x{j}" for j in range(X.shape[1]))
        self.frame_ = FeatureFrame(names, X, np.asarray(times, float), np.asarray(events, int))
        self.forest_ = fit_forest(self.frame_, self._params())
        mort, covered = oob_mortality(self.forest_, self.frame_)
        self.oob_mortality_ = mort
        c, _ = concordance_index(mort[covered], self.frame_.times[covered], self.frame_.events[covered])
        self.oob_cindex_ = c
        return self

    def predict(self, X) -> np.ndarray:
        """In-bag ensemble mortality for each row."""
        check_is_fitted(self, "forest_")
        X = check_array(X)
        return np.asarray(
            [predict_mortality(ensemble_chf_ib(self.forest_, x), self.forest_.event_times) for x in X]
        )

    def predict_chf(self, X) -> list[StepFunction]:
        check_is_fitted(self, "forest_")
        X = check_array(X)
        return [ensemble_chf_ib(self.forest_, x) for x in X]

    def predict_survival_function(self, X) -> list[StepFunction]:
        check_is_fitted(self, "forest_")
        X = check_array(X)
        out = []
        for x in X:
            fns = [t.nodes[t.route(x)].surv for t in self.forest_.trees]
            out.append(average_step_functions(fns))
        return out

    def variable_importance(self, n_repeats: int = 10, seed: int = 0) -> VimpTable:
        check_is_fitted(self, "forest_")
        return vimp_table(self.forest_, self.frame_, n_repeats=n_repeats, seed=seed)
