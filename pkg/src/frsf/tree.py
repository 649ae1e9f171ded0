"""Survival trees split by log-rank maximization over score features.

Thresholds are drawn by rank among the distinct observed values of each
candidate feature, so the grown partition is invariant to monotone
feature rescaling. Equal feature values route left. Each terminal node
stores its risk table with the cumulative-hazard and survival estimates.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

from .exceptions import UnlearnableError, ValidationError
from .survival import (
    RiskTable,
    StepFunction,
    _logrank_from_counts,
    group_counts,
    kaplan_meier,
    nelson_aalen,
    risk_table,
)


@dataclass(frozen=True)
class FeatureFrame:
    """Aligned feature matrix and survival outcomes.

    Columns are FPC scores first, scalar covariates after; all features
    compete for splits on equal terms.
    """

    names: tuple[str, ...]
    X: np.ndarray
    times: np.ndarray
    events: np.ndarray
    subject_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "events", np.asarray(self.events, dtype=int))
        if X.ndim != 2 or X.shape[1] != len(self.names):
            raise ValidationError("feature matrix shape does not match names")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("feature names must be unique")
        if X.shape[0] != self.times.size or X.shape[0] != self.events.size:
            raise ValidationError("rows, times and events must align")
        if not np.all(np.isfinite(X)):
            raise ValidationError("feature matrix has non-finite entries")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def take(self, rows) -> "FeatureFrame":
        ids = tuple(self.subject_ids[i] for i in rows) if self.subject_ids else None
        return FeatureFrame(self.names, self.X[rows], self.times[rows], self.events[rows], ids)


@dataclass(frozen=True)
class TreeParams:
    """Growth controls; mtry=None considers every feature at each node."""

    mtry: int | None = None
    min_node_events: int = 1
    min_node_size: int = 6
    max_depth: int | None = None
    n_split_candidates: int = 10
    seed: tuple[int, ...] | int = 0

    def __post_init__(self):
        if self.min_node_events < 1:
            raise ValueError("min_node_events must be at least 1")
        if self.min_node_size < 2:
            raise ValueError("min_node_size must be at least 2")
        if self.n_split_candidates < 1:
            raise ValueError("n_split_candidates must be at least 1")

    def seed_key(self) -> tuple[int, ...]:
        return (self.seed,) if isinstance(self.seed, int) else tuple(self.seed)


@dataclass(frozen=True)
class InternalNode:
    feature: int
    threshold: float
    left: int
    right: int


@dataclass(frozen=True)
class LeafNode:
    risk: RiskTable
    chf: StepFunction
    surv: StepFunction
    n_subjects: int


@dataclass(frozen=True)
class SurvivalTree:
    nodes: tuple
    feature_names: tuple[str, ...]
    seed: tuple[int, ...]

    @property
    def n_leaves(self) -> int:
        return sum(isinstance(n, LeafNode) for n in self.nodes)

    def route(self, x) -> int:
        """Index of the leaf an observation falls into (<= goes left)."""
        x = np.asarray(x, dtype=float)
        if x.size != len(self.feature_names):
            raise ValidationError(f"expected {len(self.feature_names)} features, got {x.size}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("feature vector has non-finite entries")
        i = 0
        while isinstance(self.nodes[i], InternalNode):
            node = self.nodes[i]
            i = node.left if x[node.feature] <= node.threshold else node.right
        return i

    def to_dict(self) -> dict:
        out = []
        for n in self.nodes:
            if isinstance(n, InternalNode):
                out.append(
                    {
                        "kind": "internal",
                        "feature": self.feature_names[n.feature],
                        "threshold": n.threshold,
                        "left": n.left,
                        "right": n.right,
                    }
                )
            else:
                out.append(
                    {
                        "kind": "leaf",
                        "event_times": n.risk.event_times.tolist(),
                        "d": n.risk.d.tolist(),
                        "r": n.risk.r.tolist(),
                        "n_subjects": n.n_subjects,
                    }
                )
        return {"nodes": out, "feature_names": list(self.feature_names), "seed": list(self.seed)}

    @staticmethod
    def from_dict(d: dict) -> "SurvivalTree":
        names = tuple(d["feature_names"])
        nodes = []
        for nd in d["nodes"]:
            if nd["kind"] == "internal":
                nodes.append(
                    InternalNode(names.index(nd["feature"]), nd["threshold"], nd["left"], nd["right"])
                )
            else:
                rt = RiskTable(
                    np.asarray(nd["event_times"], dtype=float),
                    np.asarray(nd["d"], dtype=int),
                    np.asarray(nd["r"], dtype=int),
                )
                nodes.append(LeafNode(rt, nelson_aalen(rt), kaplan_meier(rt), nd["n_subjects"]))
        return SurvivalTree(tuple(nodes), names, tuple(d["seed"]))


def best_split(frame: FeatureFrame, rows, candidate_features, params: TreeParams, rng):
    """Strongest feasible (feature, threshold) among sampled candidates.

    Thresholds are sampled uniformly over the ranks of each feature's
    distinct values (all of them when few); a split is feasible when both
    sides keep at least min_node_events events and one row. Ties on the
    statistic keep the first hit in (feature index, threshold ascending)
    order. Returns None when nothing is feasible.
    """
    rows = np.asarray(rows)
    times = frame.times[rows]
    events = frame.events[rows]
    total_events = int(events.sum())
    if total_events < 1:
        return None
    pooled = risk_table(times, events)
    best = None
    for f in sorted(candidate_features):
        vals = frame.X[rows, f]
        distinct = np.unique(vals)
        n_thresh = distinct.size - 1  # the maximum cannot split
        if n_thresh < 1:
            continue
        if n_thresh <= params.n_split_candidates:
            ranks = np.arange(n_thresh)
        else:
            ranks = np.sort(rng.choice(n_thresh, size=params.n_split_candidates, replace=False))
        for rank in ranks:
            c = distinct[rank]
            mask = vals <= c
            left_events = int(events[mask].sum())
            if left_events < params.min_node_events or total_events - left_events < params.min_node_events:
                continue
            d1, r1 = group_counts(pooled.event_times, times[mask], events[mask])
            stat = _logrank_from_counts(pooled.d, pooled.r, d1, r1)
            if best is None or stat > best[2]:
                best = (f, float(c), stat)
    return best


def grow_tree(frame: FeatureFrame, params: TreeParams) -> SurvivalTree:
    """Recursively partition the frame by log-rank split maximization.

    Every node draws its feature subset from a deterministic sub-stream
    keyed by (tree seed, node id), so the same frame, parameters and seed
    reproduce the identical tree.
    """
    if frame.n == 0:
        raise UnlearnableError("empty training frame")
    if int(frame.events.sum()) < 1:
        raise UnlearnableError("no events in the training data")
    if params.mtry is not None and not 1 <= params.mtry <= frame.n_features:
        raise ValueError(f"mtry must be in [1, {frame.n_features}], got {params.mtry}")
    q = params.mtry if params.mtry is not None else frame.n_features
    seed_key = params.seed_key()
    # splits peel off at least one event per level, so depth <= #events
    sys.setrecursionlimit(max(sys.getrecursionlimit(), frame.n + 1000))
    nodes: list = []

    def build(rows: np.ndarray, depth: int) -> int:
        node_id = len(nodes)
        nodes.append(None)  # reserve the slot; children get larger ids
        split = None
        if (
            rows.size >= params.min_node_size
            and (params.max_depth is None or depth < params.max_depth)
            and int(frame.events[rows].sum()) >= 1
        ):
            rng = np.random.default_rng(seed_key + (node_id,))
            feats = rng.choice(frame.n_features, size=q, replace=False)
            split = best_split(frame, rows, feats, params, rng)
        if split is None:
            rt = risk_table(frame.times[rows], frame.events[rows])
            nodes[node_id] = LeafNode(rt, nelson_aalen(rt), kaplan_meier(rt), rows.size)
            return node_id
        f, c, _ = split
        mask = frame.X[rows, f] <= c
        left = build(rows[mask], depth + 1)
        right = build(rows[~mask], depth + 1)
        nodes[node_id] = InternalNode(f, c, left, right)
        return node_id

    build(np.arange(frame.n), 0)
    return SurvivalTree(tuple(nodes), frame.names, seed_key)


def predict_chf(tree: SurvivalTree, x) -> StepFunction:
    """Cumulative hazard of the terminal node the observation routes to."""
    return tree.nodes[tree.route(x)].chf


def predict_survival(tree: SurvivalTree, x) -> StepFunction:
    """Survival curve of the terminal node the observation routes to."""
    return tree.nodes[tree.route(x)].surv


def leaf_memberships(tree: SurvivalTree, frame: FeatureFrame) -> np.ndarray:
    """Leaf index for every row of the frame."""
    return np.asarray([tree.route(frame.X[i]) for i in range(frame.n)])
