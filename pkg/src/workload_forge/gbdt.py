"""Gradient-boosted regression trees with exact greedy variance-reduction
splits, used as the workload-efficacy regressor.

Rows are reordered into a canonical lexicographic order before fitting, so the
fitted model does not depend on input row order. Split thresholds are
midpoints between consecutive distinct sorted values; gain ties resolve to the
lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels


class GbdtError(ValueError):
    pass


@dataclass
class GbdtConfig:
    iterations: int = 200
    max_depth: int = 10
    learning_rate: float = 1.0
    min_samples_leaf: int = 1
    seed: int = 0
    loss: str = "squared_error"

    def __post_init__(self):
        if self.iterations < 0:
            raise GbdtError("iterations must be >= 0")
        if self.max_depth < 1:
            raise GbdtError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise GbdtError("learning_rate must be in (0, 1]")
        if self.loss != "squared_error":
            raise GbdtError(f"unsupported loss {self.loss!r}")

    @classmethod
    def desk_scale(cls, **kw) -> "GbdtConfig":
        kw.setdefault("iterations", 50)
        kw.setdefault("max_depth", 6)
        return cls(**kw)


@dataclass
class RegressionTree:
    feature: np.ndarray  # int32, -1 at leaves
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64 leaf values (mean residual)

    def apply(self, X):
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int32)
        while True:
            f = self.feature[node]
            live = f >= 0
            if not live.any():
                return node
            rows = np.flatnonzero(live)
            nd = node[rows]
            go_left = X[rows, f[live]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value")}


@dataclass
class GbdtModel:
    base: float
    learning_rate: float
    trees: list = field(default_factory=list)
    n_features: int = 0
    train_mse_curve: list = field(default_factory=list)
    train_predictions: np.ndarray | None = None

    def predict(self, features):
        X = np.ascontiguousarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise GbdtError(f"feature width {X.shape} does not match fit width {self.n_features}")
        pred = np.full(X.shape[0], self.base, dtype=np.float64)
        for tree in self.trees:
            pred += self.learning_rate * tree.predict(X)
        return pred

    def to_dict(self):
        return {"base": self.base, "learning_rate": self.learning_rate,
                "n_features": self.n_features, "trees": [t.to_dict() for t in self.trees]}


def _grow_tree(X, presort, res, max_depth, min_leaf):
    n = X.shape[0]
    feature, threshold, left, right, value = [-1], [np.nan], [-1], [-1], [0.0]
    row_tree_node = np.zeros(n, dtype=np.int32)
    active = [0]

    for _ in range(max_depth):
        if not active:
            break
        lut = np.full(len(feature), -1, dtype=np.int32)
        lut[active] = np.arange(len(active), dtype=np.int32)
        row_local = lut[row_tree_node]
        live = row_local >= 0
        node_cnt = np.bincount(row_local[live], minlength=len(active)).astype(np.int64)
        node_sum = np.bincount(row_local[live], weights=res[live], minlength=len(active))

        gain, feat, thr = _kernels.best_splits(
            X, presort, res, row_local, len(active), node_sum, node_cnt, min_leaf)

        splitting = set(np.flatnonzero(gain > 0.0).tolist())
        next_active = []
        left_id = np.full(len(active), -1, dtype=np.int32)
        right_id = np.full(len(active), -1, dtype=np.int32)
        for li in range(len(active)):
            t = active[li]
            if li in splitting:
                feature[t] = int(feat[li])
                threshold[t] = float(thr[li])
                for side, store in ((left, left_id), (right, right_id)):
                    nid = len(feature)
                    feature.append(-1); threshold.append(np.nan)
                    left.append(-1); right.append(-1); value.append(0.0)
                    side[t] = nid
                    store[li] = nid
                    next_active.append(nid)
            else:
                value[t] = node_sum[li] / node_cnt[li] if node_cnt[li] else 0.0

        if len(splitting):
            rows = np.flatnonzero(live)
            l2 = row_local[rows]
            sel = gain[l2] > 0.0
            rows = rows[sel]
            l2 = l2[sel]
            go_left = X[rows, feat[l2]] <= thr[l2]
            row_tree_node[rows] = np.where(go_left, left_id[l2], right_id[l2])
        active = next_active

    if active:  # depth exhausted: finalize remaining nodes as leaves
        lut = np.full(len(feature), -1, dtype=np.int32)
        lut[active] = np.arange(len(active), dtype=np.int32)
        row_local = lut[row_tree_node]
        live = row_local >= 0
        node_cnt = np.bincount(row_local[live], minlength=len(active))
        node_sum = np.bincount(row_local[live], weights=res[live], minlength=len(active))
        for li, t in enumerate(active):
            value[t] = node_sum[li] / node_cnt[li] if node_cnt[li] else 0.0

    tree = RegressionTree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
    )
    return tree, row_tree_node


def fit(features, targets, cfg: GbdtConfig) -> GbdtModel:
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2:
        raise GbdtError("features must be a 2-D matrix")
    if X.shape[0] != y.shape[0]:
        raise GbdtError("features and targets disagree on row count")
    if X.shape[0] < 2:
        raise GbdtError("need at least 2 rows")
    if not np.all(np.isfinite(y)):
        raise GbdtError("non-finite target")
    if not np.all(np.isfinite(X)):
        raise GbdtError("non-finite feature value")

    canon = np.lexsort(tuple(X.T)[::-1])
    Xc = np.ascontiguousarray(X[canon])
    yc = y[canon]
    presort = np.argsort(Xc, axis=0, kind="stable").astype(np.int32)
    presort = np.ascontiguousarray(presort)

    base = float(np.mean(yc))
    pred = np.full(Xc.shape[0], base, dtype=np.float64)
    model = GbdtModel(base=base, learning_rate=cfg.learning_rate, n_features=X.shape[1])
    for _ in range(cfg.iterations):
        res = yc - pred
        tree, leaf_of_row = _grow_tree(Xc, presort, res, cfg.max_depth, cfg.min_samples_leaf)
        model.trees.append(tree)
        pred = pred + cfg.learning_rate * tree.value[leaf_of_row]
        model.train_mse_curve.append(float(np.mean((yc - pred) ** 2)))

    train_pred = np.empty_like(pred)
    train_pred[canon] = pred
    model.train_predictions = train_pred
    return model


def mse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise GbdtError("predictions and targets must be equal-length and non-empty")
    return float(np.mean((p - t) ** 2))
