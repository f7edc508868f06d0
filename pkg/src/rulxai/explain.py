"""Model-agnostic explainers: permutation importance, PDP, ALE, LIME and exact Shapley values.

Every function takes a fitted model (anything with ``predict(X)``) and a
:class:`~rulxai.ingest.TabularDataset`. Sample indices refer to rows of the
full dataset in file order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .feature_select import FeatureScoreTable


@dataclass
class Attribution:
    method: str
    sample_index: int
    base_value: float
    per_feature: dict
    metadata: dict = field(default_factory=dict)

    def total(self):
        return self.base_value + sum(self.per_feature.values())

    def ranked(self):
        return sorted(self.per_feature, key=lambda k: -abs(self.per_feature[k]))

    def to_dict(self):
        return {
            "method": self.method,
            "sample_index": int(self.sample_index),
            "base_value": float(self.base_value),
            "features": [{"name": k, "value": float(v)} for k, v in self.per_feature.items()],
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "value", "method", "sample_index"])
        w.writerow(["(base)", repr(float(self.base_value)), self.method, self.sample_index])
        for k, v in self.per_feature.items():
            w.writerow([k, repr(float(v)), self.method, self.sample_index])
        return buf.getvalue()


@dataclass
class CurveSeries:
    feature: str
    grid: np.ndarray
    values: np.ndarray
    kind: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.grid.shape != self.values.shape:
            raise ValueError("grid and values must have equal length")

    def to_dict(self):
        return {
            "feature": self.feature,
            "kind": self.kind,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["grid", "value", "kind", "feature"])
        for g, v in zip(self.grid, self.values):
            w.writerow([repr(float(g)), repr(float(v)), self.kind, self.feature])
        return buf.getvalue()


def _mse(y, p):
    r = y - p
    return float(r @ r) / len(r)


def permutation_importance(model, ds, metric="mse", repeats=10, seed=0):
    """Mean increase of test MSE when one column is shuffled; negative values are kept."""
    if metric != "mse":
        raise ValueError("only the mse metric is supported")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X, y = ds.X_test, ds.y_test
    if X.shape[0] == 0:
        raise ValueError("empty test split")
    baseline = _mse(y, model.predict(X))
    scores = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        # seeded by name so scores do not depend on column order
        rng = np.random.default_rng([seed, zlib.crc32(ds.feature_names[j].encode())])
        Xp = X.copy()
        total = 0.0
        for _ in range(repeats):
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            total += _mse(y, model.predict(Xp)) - baseline
        scores[j] = total / repeats
    meta = {"baseline_mse": baseline, "repeats": repeats, "seed": seed, "split": "test"}
    return FeatureScoreTable(list(ds.feature_names), scores, "pfi", threshold=0.0, metadata=meta)


def _with_column(X, j, values):
    """Stack copies of X, one per entry of ``values``, with column j overwritten."""
    n = X.shape[0]
    out = np.tile(X, (len(values), 1))
    out[:, j] = np.repeat(values, n)
    return out


def partial_dependence(model, ds, feature, grid_size=100):
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    j = ds.feature_index(feature)
    X = ds.X_train
    col = X[:, j]
    uniq = np.unique(col)
    if uniq.size < grid_size:
        grid = uniq
    else:
        grid = np.linspace(col.min(), col.max(), grid_size)
    preds = model.predict(_with_column(X, j, grid)).reshape(len(grid), X.shape[0])
    return CurveSeries(feature, grid, preds.mean(axis=1), "pdp", {"n_rows": int(X.shape[0])})


def ale_bins(col, num_bins):
    """Quantile edges and 1-based bin index of every value; bin k is (edge[k-1], edge[k]]."""
    edges = np.unique(np.quantile(col, np.linspace(0.0, 1.0, num_bins + 1)))
    if edges.size < 2:
        raise ValueError("feature is constant on the training data; ALE needs at least one bin")
    idx = np.clip(np.searchsorted(edges, col, side="left"), 1, edges.size - 1)
    return edges, idx


def accumulated_local_effects(model, ds, feature, num_bins=10):
    """First-order ALE on training-data quantile bins, centred so the count-weighted mean is 0.

    The centring term averages each bin's two end values weighted by the
    bin's row count.
    """
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    j = ds.feature_index(feature)
    X = ds.X_train
    col = X[:, j]
    if np.ptp(col) == 0:
        raise ValueError(f"feature {feature!r} is constant on the training data")
    edges, idx = ale_bins(col, num_bins)
    K = edges.size - 1
    lo, hi = X.copy(), X.copy()
    lo[:, j] = edges[idx - 1]
    hi[:, j] = edges[idx]
    diff = model.predict(hi) - model.predict(lo)
    counts = np.bincount(idx - 1, minlength=K)
    sums = np.bincount(idx - 1, weights=diff, minlength=K)
    effects = np.divide(sums, counts, out=np.zeros(K), where=counts > 0)
    ale = np.concatenate([[0.0], np.cumsum(effects)])
    offset = float((counts * 0.5 * (ale[:-1] + ale[1:])).sum() / counts.sum())
    return CurveSeries(feature, edges, ale - offset, "ale", {"bin_counts": counts.tolist()})


def ale_weighted_mean(curve):
    counts = np.asarray(curve.metadata["bin_counts"], dtype=np.float64)
    v = curve.values
    return float((counts * 0.5 * (v[:-1] + v[1:])).sum() / counts.sum())


def lime_explain(model, ds, sample_index, num_samples=1000, kernel_width=None, top_k=10, seed=0):
    """Weighted linear surrogate fitted to model outputs on Gaussian perturbations of one row.

    Perturbations use each feature's training standard deviation; weights are
    ``exp(-dist^2 / kernel_width^2)`` with distances in standardised units.
    Coefficients are in the original feature units; the intercept is the
    ``base_value``.
    """
    X = ds.X
    d = X.shape[1]
    if not 0 <= sample_index < X.shape[0]:
        raise IndexError(f"sample_index {sample_index} outside dataset of {X.shape[0]} rows")
    if num_samples < d + 2:
        raise ValueError(f"num_samples must be at least d + 2 = {d + 2}")
    if kernel_width is None:
        kernel_width = 0.75 * math.sqrt(d)
    x = X[sample_index]
    sd = ds.X_train.std(axis=0)
    active = sd > 0
    rng = np.random.default_rng(seed)
    Z = np.tile(x, (num_samples, 1))
    noise = rng.standard_normal((num_samples, d))
    Z[:, active] += noise[:, active] * sd[active]
    f = model.predict(Z)
    dist2 = (((Z[:, active] - x[active]) / sd[active]) ** 2).sum(axis=1)
    w = np.exp(-dist2 / kernel_width**2)
    if w.sum() < 1e-12 * num_samples:
        raise ValueError("all LIME kernel weights vanish; use a larger kernel_width")
    A = np.column_stack([np.ones(num_samples), Z[:, active] - x[active]])
    sw = np.sqrt(w)
    sol, _, rank, _ = np.linalg.lstsq(A * sw[:, None], f * sw, rcond=None)
    if rank < A.shape[1]:
        raise ValueError("weighted LIME design is singular; use a larger kernel_width or more samples")
    coef = np.zeros(d)
    coef[active] = sol[1:]
    # the fit is centred on x; convert its value at x into an intercept at the origin
    intercept = float(sol[0] - coef @ x)
    fitted = A @ sol
    wm = (w * f).sum() / w.sum()
    ss_tot = float((w * (f - wm) ** 2).sum())
    score = 1.0 - float((w * (f - fitted) ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    order = sorted(range(d), key=lambda k: (-abs(coef[k]), k))[:top_k]
    per_feature = {ds.feature_names[k]: float(coef[k]) for k in order}
    meta = {
        "kernel_width": kernel_width,
        "num_samples": num_samples,
        "seed": seed,
        "coefficients": dict(zip(ds.feature_names, coef.tolist())),
        "local_prediction": float(sol[0]),
        "model_prediction": float(model.predict(x[None, :])[0]),
        "weighted_r2": score,
    }
    return Attribution("lime", int(sample_index), intercept, per_feature, meta)


def default_background(ds, size=100, seed=0):
    X = ds.X_train
    if X.shape[0] <= size:
        return X.copy()
    rows = np.sort(np.random.default_rng(seed).choice(X.shape[0], size=size, replace=False))
    return X[rows]


def coalition_values(model, x, background, chunk_rows=200_000):
    """v(S) for every subset S of features, indexed by bitmask (bit j set = feature j taken from x)."""
    d = x.size
    B = background.shape[0]
    n_sub = 1 << d
    masks = ((np.arange(n_sub)[:, None] >> np.arange(d)) & 1).astype(bool)
    values = np.empty(n_sub)
    step = max(1, chunk_rows // B)
    for start in range(0, n_sub, step):
        m = masks[start : start + step]
        rows = np.where(m[:, None, :], x[None, None, :], background[None, :, :]).reshape(-1, d)
        values[start : start + step] = model.predict(rows).reshape(len(m), B).mean(axis=1)
    return values


def shapley_from_values(values, d):
    ids = np.arange(1 << d)
    sizes = np.array([bin(i).count("1") for i in range(1 << d)])
    fact = [math.factorial(k) for k in range(d + 1)]
    weight = np.array([fact[s] * fact[d - s - 1] / fact[d] if s < d else 0.0 for s in range(d + 1)])
    phi = np.zeros(d)
    for j in range(d):
        without = ids[(ids >> j) & 1 == 0]
        phi[j] = float((weight[sizes[without]] * (values[without | (1 << j)] - values[without])).sum())
    return phi


def shapley_exact(model, ds, sample_index, background=None, max_features=15, seed=0):
    """Interventional Shapley values by enumerating every feature subset.

    ``base_value`` is the mean prediction over the background rows. The cost is
    ``2**d * len(background)`` predictions, hence the ``max_features`` cap.
    """
    d = ds.n_features
    if d > max_features:
        raise ValueError(
            f"exact Shapley enumeration over {d} features exceeds max_features={max_features}; "
            "select a smaller feature subset first"
        )
    if not 0 <= sample_index < ds.X.shape[0]:
        raise IndexError(f"sample_index {sample_index} outside dataset of {ds.X.shape[0]} rows")
    if background is None:
        background = default_background(ds, seed=seed)
    background = np.asarray(background, dtype=np.float64)
    if background.ndim != 2 or background.shape[0] == 0:
        raise ValueError("background must be a non-empty 2-D array")
    x = ds.X[sample_index]
    values = coalition_values(model, x, background)
    phi = shapley_from_values(values, d)
    meta = {
        "background_size": int(background.shape[0]),
        "n_coalitions": int(values.size),
        "prediction": float(values[-1]),
        "seed": seed,
    }
    return Attribution("shapley", int(sample_index), float(values[0]), dict(zip(ds.feature_names, phi.tolist())), meta)
