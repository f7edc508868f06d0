"""Model diagnostics: accuracy, overfit slices, split-conformal reliability, robustness and resilience."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .explain import CurveSeries
from .models import refit

DEFAULT_LAMBDAS = tuple(round(0.05 * k, 2) for k in range(9))
DEFAULT_RATIOS = tuple(round(0.1 * k, 1) for k in range(1, 11))


def clean_json(obj):
    """Recursively convert numpy scalars/arrays to Python types and NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean_json(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


@dataclass
class AccuracyRecord:
    split: str
    mse: float
    mae: float
    r2: float

    def to_dict(self):
        return clean_json(dataclasses.asdict(self))


def metrics(y, p, split):
    r = y - p
    mse = float(r @ r) / r.size
    mae = float(np.abs(r).sum()) / r.size
    d = y - y.mean()
    sst = float(d @ d)
    r2 = 1.0 - float(r @ r) / sst if sst > 0 else float("nan")
    return AccuracyRecord(split, mse, mae, r2)


def accuracy_report(model, ds):
    """Train/test MSE, MAE and R2 plus the test minus train gap; R2 is NaN for a constant split target."""
    if ds.X_train.shape[0] == 0 or ds.X_test.shape[0] == 0:
        raise ValueError("both splits must be non-empty")
    train = metrics(ds.y_train, model.predict(ds.X_train), "train")
    test = metrics(ds.y_test, model.predict(ds.X_test), "test")
    gap = {k: getattr(test, k) - getattr(train, k) for k in ("mse", "mae", "r2")}
    return {"train": train, "test": test, "gap": gap}


def residual_pairs(model, ds):
    out = {}
    for split, X, y in (("train", ds.X_train, ds.y_train), ("test", ds.X_test, ds.y_test)):
        p = model.predict(X)
        out[split] = {"prediction": p, "residual": y - p}
    return out


def residual_csv(pairs):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["prediction", "residual", "split"])
    for split in ("train", "test"):
        for p, r in zip(pairs[split]["prediction"], pairs[split]["residual"]):
            w.writerow([repr(float(p)), repr(float(r)), split])
    return buf.getvalue()


def _assign(col, edges):
    # interior edges only; bin k is (edges[k], edges[k+1]] with the ends open
    return np.searchsorted(edges[1:-1], col, side="left")


def overfit_slices(model, ds, feature, num_bins=10, flag_factor=1.5):
    """Per equal-frequency bin of one feature: train/test MSE, their gap and a flag for weak test bins."""
    j = ds.feature_index(feature)
    tr = ds.X_train[:, j]
    if np.ptp(tr) == 0:
        raise ValueError(f"feature {feature!r} is constant on the training data")
    edges = np.unique(np.quantile(tr, np.linspace(0, 1, num_bins + 1)))
    K = edges.size - 1
    sq = {}
    idx = {}
    for split, X, y in (("train", ds.X_train, ds.y_train), ("test", ds.X_test, ds.y_test)):
        sq[split] = (y - model.predict(X)) ** 2
        idx[split] = _assign(X[:, j], edges)
    global_test = float(sq["test"].mean()) if sq["test"].size else float("nan")
    bins = []
    for k in range(K):
        row = {"bin": k, "lower": float(edges[k]), "upper": float(edges[k + 1])}
        for split in ("train", "test"):
            m = idx[split] == k
            row[f"n_{split}"] = int(m.sum())
            row[f"{split}_mse"] = float(sq[split][m].mean()) if m.any() else float("nan")
        row["gap"] = row["test_mse"] - row["train_mse"]
        row["flagged"] = bool(row["n_test"] > 0 and row["test_mse"] > flag_factor * global_test)
        bins.append(row)
    return {"feature": feature, "flag_factor": flag_factor, "global_test_mse": global_test, "bins": bins}


@dataclass
class ConformalBand:
    alpha: float
    q_hat: float
    coverage: float
    avg_bandwidth: float
    segmented: list
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return clean_json(dataclasses.asdict(self))


def conformal_quantile(abs_resid, alpha):
    """The ceil((n+1)(1-alpha))-th smallest absolute residual."""
    n = abs_resid.size
    k = math.ceil((n + 1) * (1 - alpha))
    if k > n:
        raise ValueError(f"calibration set of {n} rows is too small for alpha={alpha}")
    return float(np.sort(abs_resid)[k - 1])


def conformal_reliability(model, ds, alpha=0.1, calib_fraction=0.5, seed=0, min_calibration=10):
    """Split conformal band: refit on part of the training rows, calibrate on the rest, score on test.

    Segments are the ten deciles of the calibration predictions. Each segment
    reports the test coverage of the global band and a local band width
    ``2 * q_k`` computed from the calibration rows of that segment alone (the
    largest residual when the segment is too small for the order statistic).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0.0 < calib_fraction < 1.0:
        raise ValueError("calib_fraction must lie in (0, 1)")
    train_rows = np.flatnonzero(ds.train_mask)
    n_cal = int(round(calib_fraction * train_rows.size))
    if n_cal < min_calibration:
        raise ValueError(f"calibration set of {n_cal} rows is below the minimum of {min_calibration}")
    perm = np.random.default_rng(seed).permutation(train_rows.size)
    cal_rows = np.sort(train_rows[perm[:n_cal]])
    proper = np.zeros_like(ds.train_mask)
    proper[train_rows[perm[n_cal:]]] = True
    proper_ds = dataclasses.replace(ds, train_mask=proper)
    fitted = refit(model, proper_ds)
    cal_pred = fitted.predict(ds.X[cal_rows])
    cal_res = np.abs(ds.y[cal_rows] - cal_pred)
    q_hat = conformal_quantile(cal_res, alpha)
    test_pred = fitted.predict(ds.X_test)
    test_res = np.abs(ds.y_test - test_pred)
    covered = test_res <= q_hat
    edges = np.quantile(cal_pred, np.linspace(0, 1, 11))
    cal_seg = np.clip(np.searchsorted(edges[1:-1], cal_pred, side="left"), 0, 9)
    test_seg = np.clip(np.searchsorted(edges[1:-1], test_pred, side="left"), 0, 9)
    segmented = []
    for k in range(10):
        r = cal_res[cal_seg == k]
        if r.size == 0:
            q_k = q_hat
        else:
            kk = math.ceil((r.size + 1) * (1 - alpha))
            q_k = float(np.sort(r)[min(kk, r.size) - 1])
        m = test_seg == k
        segmented.append(
            {
                "decile": k + 1,
                "n_calibration": int(r.size),
                "n_test": int(m.sum()),
                "coverage": float(covered[m].mean()) if m.any() else float("nan"),
                "bandwidth": 2.0 * q_k,
            }
        )
    meta = {"n_calibration": int(n_cal), "n_proper_train": int(proper.sum()), "seed": seed, "calib_fraction": calib_fraction}
    return ConformalBand(alpha, q_hat, float(covered.mean()), 2.0 * q_hat, segmented, meta)


def robustness_curve(model, ds, lambdas=DEFAULT_LAMBDAS, repeats=10, seed=0):
    """Mean test MSE after adding N(0, (lambda * sd_j)^2) noise to each column; sd_j from training data."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.size == 0 or lambdas.min() < 0 or lambdas.max() > 1:
        raise ValueError("lambdas must lie in [0, 1]")
    if np.any(np.diff(lambdas) <= 0):
        raise ValueError("lambdas must be strictly ascending")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X, y = ds.X_test, ds.y_test
    sd = ds.X_train.std(axis=0)
    values = np.empty(lambdas.size)
    for i, lam in enumerate(lambdas):
        if lam == 0:
            values[i] = metrics(y, model.predict(X), "test").mse
            continue
        rng = np.random.default_rng([seed, i])
        total = 0.0
        for _ in range(repeats):
            Xn = X + rng.standard_normal(X.shape) * (lam * sd)
            total += metrics(y, model.predict(Xn), "test").mse
        values[i] = total / repeats
    return CurveSeries("all", lambdas, values, "robustness", {"repeats": repeats, "seed": seed, "noise": "lambda * train std"})


def resilience_curve(model, ds, ratios=DEFAULT_RATIOS, shift_ratio=0.1):
    """MSE of the worst ceil(ratio * n_test) rows by |residual|, and the mean shift of the worst slice.

    The shift table holds, per feature, (mean over the worst ``shift_ratio``
    rows - mean over all test rows) / test std.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.size == 0 or ratios.min() <= 0 or ratios.max() > 1:
        raise ValueError("ratios must lie in (0, 1]")
    if np.any(np.diff(ratios) <= 0):
        raise ValueError("ratios must be strictly ascending")
    X, y = ds.X_test, ds.y_test
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty test split")
    res = y - model.predict(X)
    order = np.argsort(-np.abs(res), kind="stable")
    sq = res[order] ** 2
    prefix = np.cumsum(sq)
    values = np.empty(ratios.size)
    for i, a in enumerate(ratios):
        k = max(1, math.ceil(round(a * n, 9)))
        values[i] = float(sq.sum()) / n if k >= n else prefix[k - 1] / k
    worst = order[: max(1, math.ceil(round(shift_ratio * n, 9)))]
    mu, sd = X.mean(axis=0), X.std(axis=0)
    diff = X[worst].mean(axis=0) - mu
    shift = np.divide(diff, sd, out=np.zeros_like(diff), where=sd > 0)
    curve = CurveSeries("all", ratios, values, "resilience", {"definition": "worst |residual| prefix MSE"})
    return curve, dict(zip(ds.feature_names, shift.tolist()))


@dataclass
class DiagnosticsReport:
    model_kind: str
    accuracy: dict
    overfit: dict | None = None
    reliability: ConformalBand | None = None
    robustness: CurveSeries | None = None
    resilience: CurveSeries | None = None
    shift: dict | None = None
    residuals: dict | None = None

    def to_dict(self):
        acc = {k: (v.to_dict() if isinstance(v, AccuracyRecord) else v) for k, v in self.accuracy.items()}
        doc = {"model": self.model_kind, "accuracy": acc}
        if self.overfit is not None:
            doc["overfit"] = self.overfit
        if self.reliability is not None:
            doc["reliability"] = self.reliability.to_dict()
        if self.robustness is not None:
            doc["robustness"] = self.robustness.to_dict()
        if self.resilience is not None:
            doc["resilience"] = self.resilience.to_dict()
            doc["shift"] = self.shift
        if self.residuals is not None:
            doc["residuals"] = {s: {k: v.tolist() for k, v in d.items()} for s, d in self.residuals.items()}
        return clean_json(doc)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)
