"""Squared-error regression trees (CART) and greedy tree sums (FIGS)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .base import FittedModel, ModelError, as_list, register

# gains at or below this fraction of the node SSE count as zero
_REL_GAIN_TOL = 1e-12


@dataclass(frozen=True)
class TreeSpec:
    criterion: str = "squared_error"
    max_depth: int = 5
    min_samples_leaf: int = 5
    prune_alpha: float = 0.0

    def __post_init__(self):
        if self.criterion != "squared_error":
            raise ValueError("only the squared_error criterion is supported")
        if self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("max_depth and min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class FigsSpec:
    max_depth: int = 5
    max_splits: int = 100
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.max_splits < 1 or self.max_depth < 1:
            raise ValueError("max_splits and max_depth must be >= 1")


def best_split(X, target, min_samples_leaf=1):
    """Best variance-reduction split of ``target`` over all columns of ``X``.

    Candidate thresholds are midpoints of consecutive distinct sorted values.
    Returns ``(gain, feature, threshold)`` or ``None`` when no split has
    positive gain. Ties go to the lowest feature index, then the lowest
    threshold.
    """
    n, d = X.shape
    if n < 2 * min_samples_leaf or n < 2:
        return None
    if np.ptp(target) == 0.0:
        return None
    t = target - target.mean()
    total_sse = float(t @ t)
    total = t.sum()
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    left = np.cumsum(t[order], axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    gains = left**2 / n_left + (total - left) ** 2 / n_right - total**2 / n
    valid = xs[1:] > xs[:-1]
    if min_samples_leaf > 1:
        k = np.arange(1, n)
        valid &= ((k >= min_samples_leaf) & (n - k >= min_samples_leaf))[:, None]
    gains = np.where(valid, gains, -np.inf)
    best = gains.max()
    if not np.isfinite(best) or best <= _REL_GAIN_TOL * total_sse:
        return None
    col_best = gains.max(axis=0)
    j = int(np.flatnonzero(col_best == best)[0])
    k = int(np.flatnonzero(gains[:, j] == best)[0])
    threshold = 0.5 * (xs[k, j] + xs[k + 1, j])
    if threshold >= xs[k + 1, j]:  # adjacent doubles
        threshold = xs[k, j]
    return float(best), j, float(threshold)


class Tree:
    """Array-backed binary tree; rows with ``x[feature] <= threshold`` go left."""

    def __init__(self, feature, threshold, left, right, value, n_samples, gain):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)
        self.gain = np.asarray(gain, dtype=np.float64)

    @property
    def n_nodes(self):
        return len(self.feature)

    def is_leaf(self, node):
        return self.feature[node] < 0

    def leaves(self):
        return np.flatnonzero(self.feature < 0)

    def n_splits(self):
        return int((self.feature >= 0).sum())

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return node
            idx = np.flatnonzero(internal)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])

    def predict(self, X):
        return self.value[self.apply(X)]

    def decision_path(self, x):
        """Node ids from the root to the leaf reached by the single row ``x``."""
        path = [0]
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
            path.append(int(node))
        return path

    def depth(self):
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def to_dict(self):
        return {
            "feature": as_list(self.feature),
            "threshold": as_list(self.threshold),
            "left": as_list(self.left),
            "right": as_list(self.right),
            "value": as_list(self.value),
            "n_samples": as_list(self.n_samples),
            "gain": as_list(self.gain),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.n_samples, self.gain = [], [], []

    def add(self, value, n):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        self.n_samples.append(int(n))
        self.gain.append(0.0)
        return len(self.feature) - 1

    def build(self):
        return Tree(self.feature, self.threshold, self.left, self.right, self.value, self.n_samples, self.gain)


def grow_tree(X, y, max_depth, min_samples_leaf=1):
    """Greedy depth-first CART growth; leaves hold the mean of their rows."""
    if X.shape[0] == 0:
        raise ModelError("cannot fit a tree on an empty training set")
    b = _Builder()

    def grow(rows, depth):
        node = b.add(y[rows].mean(), rows.size)
        if depth >= max_depth:
            return node
        split = best_split(X[rows], y[rows], min_samples_leaf)
        if split is None:
            return node
        gain, j, thr = split
        mask = X[rows, j] <= thr
        b.feature[node], b.threshold[node], b.gain[node] = j, thr, gain
        b.left[node] = grow(rows[mask], depth + 1)
        b.right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return b.build()


@register
class DecisionTreeModel(FittedModel):
    kind = "tree"

    def __init__(self, feature_names, spec, tree, seed=0):
        super().__init__(feature_names, spec, seed)
        self.tree = tree

    def _predict(self, X):
        return self.tree.predict(X)

    @property
    def trees(self):
        return [self.tree]

    @property
    def base_value(self):
        return 0.0

    def params(self):
        return {"tree": self.tree.to_dict()}

    @classmethod
    def from_params(cls, feature_names, spec, seed, params):
        return cls(feature_names, spec, Tree.from_dict(params["tree"]), seed)


def fit_decision_tree(ds, spec=TreeSpec()):
    X, y = ds.X_train, ds.y_train
    if X.shape[0] == 0:
        raise ModelError("empty training set")
    if X.shape[0] < 2 * spec.min_samples_leaf:
        raise ModelError(f"need at least {2 * spec.min_samples_leaf} training rows")
    tree = grow_tree(X, y, spec.max_depth, spec.min_samples_leaf)
    return DecisionTreeModel(ds.feature_names, asdict(spec), tree, seed=0)


class _FigsTree:
    """Mutable tree grown by FIGS; remembers the training rows of every node."""

    def __init__(self, n_rows):
        self.b = _Builder()
        self.rows = []
        self.depth = []
        self.b.add(0.0, n_rows)
        self.rows.append(np.arange(n_rows))
        self.depth.append(0)

    def leaves(self):
        return [i for i, f in enumerate(self.b.feature) if f < 0]

    def split(self, node, X, j, thr, gain):
        rows = self.rows[node]
        mask = X[rows, j] <= thr
        b = self.b
        b.feature[node], b.threshold[node], b.gain[node] = j, thr, gain
        for child_rows, attr in ((rows[mask], "left"), (rows[~mask], "right")):
            child = b.add(0.0, child_rows.size)
            getattr(b, attr)[node] = child
            self.rows.append(child_rows)
            self.depth.append(self.depth[node] + 1)

    def refit(self, target):
        for node, rows in enumerate(self.rows):
            self.b.value[node] = float(target[rows].mean())

    def predict_train(self, n):
        out = np.empty(n)
        for node in self.leaves():
            out[self.rows[node]] = self.b.value[node]
        return out


@register
class FigsModel(FittedModel):
    kind = "figs"

    def __init__(self, feature_names, spec, trees, seed=0):
        super().__init__(feature_names, spec, seed)
        self.trees = list(trees)

    def _predict(self, X):
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out += t.predict(X)
        return out

    @property
    def base_value(self):
        return 0.0

    def n_splits(self):
        return sum(t.n_splits() for t in self.trees)

    def params(self):
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_params(cls, feature_names, spec, seed, params):
        return cls(feature_names, spec, [Tree.from_dict(t) for t in params["trees"]], seed)


def fit_figs(ds, spec=FigsSpec()):
    """Fast interpretable greedy-tree sums.

    Each iteration scores every splittable leaf of every tree against the
    residual left by the other trees, plus a fresh root stump against the
    full residual, applies the single best split, and refits the leaf values
    of the tree it touched.
    """
    X, y = ds.X_train, ds.y_train
    n = X.shape[0]
    if n == 0:
        raise ModelError("empty training set")
    if n < 10:
        raise ModelError("FIGS needs at least 10 training rows")
    trees = []
    preds = []
    total = np.zeros(n)
    sse = [float(y @ y)]
    for _ in range(spec.max_splits):
        best = None  # (gain, tree index or None, node, feature, threshold)
        for k, tree in enumerate(trees):
            target = y - (total - preds[k])
            for node in tree.leaves():
                if tree.depth[node] >= spec.max_depth:
                    continue
                rows = tree.rows[node]
                split = best_split(X[rows], target[rows], spec.min_samples_leaf)
                if split is not None and (best is None or split[0] > best[0]):
                    best = (split[0], k, node, split[1], split[2])
        split = best_split(X, y - total, spec.min_samples_leaf)
        if split is not None and (best is None or split[0] > best[0]):
            best = (split[0], None, 0, split[1], split[2])
        if best is None:
            break
        gain, k, node, j, thr = best
        if k is None:
            trees.append(_FigsTree(n))
            preds.append(np.zeros(n))
            k = len(trees) - 1
        tree = trees[k]
        tree.split(node, X, j, thr, gain)
        target = y - (total - preds[k])
        tree.refit(target)
        new_pred = tree.predict_train(n)
        total = total - preds[k] + new_pred
        preds[k] = new_pred
        sse.append(float(((y - total) ** 2).sum()))
    if not trees:
        # no split has positive gain: a single leaf carrying the mean
        trees.append(_FigsTree(n))
        trees[0].refit(y)
    model = FigsModel(ds.feature_names, asdict(spec), [t.b.build() for t in trees], seed=0)
    model.fit_info = {"n_splits": model.n_splits(), "n_trees": len(trees), "sse": sse}
    return model
