"""Gradient-boosted regression trees used as the cost model.

From-scratch stage-wise squared-error boosting with exact greedy splits:
deterministic, dependency-free, and fast enough to refit every tuning
iteration.  Features encode (workload, configuration) pairs; targets are
measured fitness values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .knobspace import Configuration, DesignSpace, LayerWorkload

DEFAULT_N_TREES = 100
DEFAULT_MAX_DEPTH = 6
DEFAULT_LEARNING_RATE = 0.3
DEFAULT_TOL = 1e-12


def workload_descriptor(workload: LayerWorkload) -> np.ndarray:
    """Six log2-scaled shape entries: N, Cin, Cout, Hout, Wout, KH*KW."""
    dims = (workload.n, workload.cin, workload.cout,
            workload.hout, workload.wout, workload.kh * workload.kw)
    return np.log2(np.asarray(dims, dtype=np.float64))


def encode_features(space: DesignSpace, workload: LayerWorkload,
                    cfg: Configuration) -> np.ndarray:
    """Feature vector: normalized knob indices, log2 knob values, workload descriptor."""
    norm = np.empty(len(space.knobs))
    vals = np.empty(len(space.knobs))
    for i, (knob, idx) in enumerate(zip(space.knobs, cfg.indices)):
        span = len(knob.values) - 1
        norm[i] = idx / span if span else 0.0
        vals[i] = np.log2(knob.values[idx])
    return np.concatenate([norm, vals, workload_descriptor(workload)])


def encode_batch(space, workload, cfgs) -> np.ndarray:
    return np.stack([encode_features(space, workload, c) for c in cfgs])


@dataclass
class RegressionTree:
    """Binary regression tree in flat-array form; feature == -1 marks a leaf."""

    feature: np.ndarray    # int32 per node
    threshold: np.ndarray  # float64 per node
    left: np.ndarray       # int32 child slots
    right: np.ndarray
    value: np.ndarray      # float64 leaf predictions (0 on internal nodes)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        node = np.zeros(len(x), dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            xv = np.take_along_axis(x, np.maximum(feat, 0)[:, None], axis=1)[:, 0]
            nxt = np.where(xv <= self.threshold[node], self.left[node], self.right[node])
            node = np.where(active, nxt, node)
        return self.value[node]

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"value": float(self.value[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }


def _best_split(x: np.ndarray, y: np.ndarray):
    """Exact greedy SSE-minimizing split; returns (feature, threshold) or None."""
    m = len(y)
    if m < 2:
        return None
    order = np.argsort(x, axis=0, kind="stable")
    xs = np.take_along_axis(x, order, axis=0)
    ys = y[order]
    csum = np.cumsum(ys, axis=0)
    total = csum[-1, 0]
    n_left = np.arange(1, m, dtype=np.float64)[:, None]
    sum_left = csum[:-1]
    # Minimizing SSE == maximizing sum_l^2/n_l + sum_r^2/n_r (sum of y^2 is fixed).
    score = sum_left ** 2 / n_left + (total - sum_left) ** 2 / (m - n_left)
    score[xs[1:] == xs[:-1]] = -np.inf
    flat = int(np.argmax(score))
    pos, feat = divmod(flat, x.shape[1])
    if score[pos, feat] <= total * total / m + 1e-12 * (1.0 + abs(total)):
        return None
    thr = 0.5 * (xs[pos, feat] + xs[pos + 1, feat])
    return feat, thr


def _build_tree(x: np.ndarray, y: np.ndarray, max_depth: int | None) -> RegressionTree:
    features, thresholds, lefts, rights, values = [], [], [], [], []

    def new_node():
        features.append(-1)
        thresholds.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        values.append(0.0)
        return len(features) - 1

    stack = [(np.arange(len(y)), 0, new_node())]
    while stack:
        rows, depth, slot = stack.pop()
        split = None
        if max_depth is None or depth < max_depth:
            split = _best_split(x[rows], y[rows])
        if split is None:
            values[slot] = float(y[rows].mean())
            continue
        feat, thr = split
        features[slot] = feat
        thresholds[slot] = thr
        go_left = x[rows, feat] <= thr
        lefts[slot] = new_node()
        rights[slot] = new_node()
        stack.append((rows[go_left], depth + 1, lefts[slot]))
        stack.append((rows[~go_left], depth + 1, rights[slot]))

    return RegressionTree(
        feature=np.asarray(features, dtype=np.int32),
        threshold=np.asarray(thresholds),
        left=np.asarray(lefts, dtype=np.int32),
        right=np.asarray(rights, dtype=np.int32),
        value=np.asarray(values),
    )


@dataclass
class SurrogateModel:
    """Boosted ensemble: prediction = base + learning_rate * sum of tree outputs."""

    base_prediction: float
    trees: list[RegressionTree]
    learning_rate: float
    max_depth: int | None
    n_features: int
    _stack: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.trees and not self._stack:
            self._stack = _stack_trees(self.trees)

    def predict(self, features) -> np.ndarray | float:
        """Predicted fitness for one feature vector or a (n, F) batch."""
        x = np.asarray(features, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        out = np.full(len(x), self.base_prediction)
        if self.trees:
            out += self.learning_rate * _predict_stacked(self._stack, x)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        """JSON-friendly dump for debugging (not a stable format)."""
        return {
            "base_prediction": self.base_prediction,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }


def _stack_trees(trees):
    t = len(trees)
    width = max(len(tree.feature) for tree in trees)
    feat = np.full((t, width), -1, dtype=np.int32)
    thr = np.zeros((t, width))
    left = np.zeros((t, width), dtype=np.int32)
    right = np.zeros((t, width), dtype=np.int32)
    val = np.zeros((t, width))
    for i, tree in enumerate(trees):
        k = len(tree.feature)
        feat[i, :k] = tree.feature
        thr[i, :k] = tree.threshold
        left[i, :k] = tree.left
        right[i, :k] = tree.right
        val[i, :k] = tree.value
    return {"feat": feat, "thr": thr, "left": left, "right": right, "val": val,
            "tree_ids": np.arange(t)}


def _predict_stacked(stack, x):
    n = len(x)
    tree_ids = stack["tree_ids"][None, :]
    node = np.zeros((n, len(stack["tree_ids"])), dtype=np.int32)
    while True:
        feat = stack["feat"][tree_ids, node]
        active = feat >= 0
        if not active.any():
            break
        xv = np.take_along_axis(x, np.maximum(feat, 0), axis=1)
        go_left = xv <= stack["thr"][tree_ids, node]
        nxt = np.where(go_left, stack["left"][tree_ids, node], stack["right"][tree_ids, node])
        node = np.where(active, nxt, node)
    return stack["val"][tree_ids, node].sum(axis=1)


def fit(features, targets, *, n_trees: int = DEFAULT_N_TREES,
        max_depth: int | None = DEFAULT_MAX_DEPTH,
        learning_rate: float = DEFAULT_LEARNING_RATE,
        tol: float = DEFAULT_TOL) -> SurrogateModel:
    """Fit the booster on (n, F) features and n finite fitness targets.

    Each stage fits the current residuals with an exact-greedy tree; fitting
    stops at n_trees or once a stage improves residual SSE by less than tol.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0 or len(x) != len(y):
        raise ValueError("need a non-empty (n, F) feature matrix and matching targets")
    if not np.isfinite(x).all() or not np.isfinite(y).all():
        raise ValueError("features and targets must be finite (drop invalid measurements first)")

    base = float(y.mean())
    resid = y - base
    trees: list[RegressionTree] = []
    sse = float(resid @ resid)
    for _ in range(n_trees):
        tree = _build_tree(x, resid, max_depth)
        new_resid = resid - learning_rate * tree.predict(x)
        new_sse = float(new_resid @ new_resid)
        if sse - new_sse < tol:
            break
        trees.append(tree)
        resid, sse = new_resid, new_sse

    return SurrogateModel(base_prediction=base, trees=trees,
                          learning_rate=learning_rate, max_depth=max_depth,
                          n_features=x.shape[1])
