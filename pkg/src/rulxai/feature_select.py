"""Feature scoring against the RUL target and threshold-based selection."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .models.tree import grow_tree

METHODS = ("pearson", "distance_corr", "gbdt_importance", "rcit_dependence")


@dataclass
class FeatureScoreTable:
    feature_names: list
    scores: np.ndarray
    method: str
    threshold: float = 0.01
    p_values: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def as_dict(self):
        return dict(zip(self.feature_names, self.scores.tolist()))

    def ranked(self):
        """Feature names by descending |score|, ties by column index."""
        order = sorted(range(len(self.scores)), key=lambda j: (-abs(self.scores[j]), j))
        return [self.feature_names[j] for j in order]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["feature", "score", "method"] + (["p_value"] if self.p_values is not None else [])
        w.writerow(header)
        for j, name in enumerate(self.feature_names):
            row = [name, repr(float(self.scores[j])), self.method]
            if self.p_values is not None:
                row.append(repr(float(self.p_values[j])))
            w.writerow(row)
        return buf.getvalue()

    def to_json(self):
        doc = {
            "method": self.method,
            "threshold": self.threshold,
            "features": [{"name": n, "score": float(s)} for n, s in zip(self.feature_names, self.scores)],
            "metadata": self.metadata,
        }
        if self.p_values is not None:
            for entry, p in zip(doc["features"], self.p_values):
                entry["p_value"] = float(p)
        return json.dumps(doc, indent=1, sort_keys=True)


def _training(ds, min_rows):
    X, y = ds.X_train, ds.y_train
    if X.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} training rows, got {X.shape[0]}")
    return X, y


def pearson(x, y):
    """Sample Pearson correlation; 0 when either input has zero variance."""
    xc = x - x.mean()
    yc = y - y.mean()
    sxx, syy = xc @ xc, yc @ yc
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    r = (xc @ yc) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def pearson_scores(ds):
    X, y = _training(ds, 2)
    scores = np.array([pearson(X[:, j], y) for j in range(X.shape[1])])
    return FeatureScoreTable(list(ds.feature_names), scores, "pearson")


def _centered_distances(v):
    v = v.reshape(len(v), -1)
    D = np.sqrt(((v[:, None, :] - v[None, :, :]) ** 2).sum(axis=-1))
    return D - D.mean(axis=0) - D.mean(axis=1)[:, None] + D.mean()


def dcor(x, y):
    """Szekely distance correlation from double-centred distance matrices."""
    A = _centered_distances(np.asarray(x, dtype=np.float64))
    B = _centered_distances(np.asarray(y, dtype=np.float64))
    dvx, dvy = (A * A).mean(), (B * B).mean()
    if dvx <= 0.0 or dvy <= 0.0:
        return 0.0
    dcov2 = (A * B).mean()
    return float(np.sqrt(max(dcov2, 0.0) / np.sqrt(dvx * dvy)))


def distance_correlation(ds):
    X, y = _training(ds, 2)
    scores = np.array([0.0 if np.ptp(X[:, j]) == 0 else dcor(X[:, j], y) for j in range(X.shape[1])])
    return FeatureScoreTable(list(ds.feature_names), scores, "distance_corr")


def gbdt_importance(ds, num_trees=100, max_depth=3, learning_rate=0.1, seed=0, min_samples_leaf=5):
    """Total split gain per feature of a least-squares boosted tree ensemble, normalised to sum 1.

    Trees are grown deterministically; ``seed`` is recorded for provenance.
    """
    X, y = _training(ds, 10)
    gains = np.zeros(X.shape[1])
    pred = np.full(len(y), y.mean())
    for _ in range(num_trees):
        resid = y - pred
        tree = grow_tree(X, resid, max_depth, min_samples_leaf)
        if tree.n_splits() == 0:
            break
        for node in np.flatnonzero(tree.feature >= 0):
            gains[tree.feature[node]] += tree.gain[node]
        pred = pred + learning_rate * tree.predict(X)
    total = gains.sum()
    scores = gains / total if total > 0 else gains
    meta = {"num_trees": num_trees, "max_depth": max_depth, "learning_rate": learning_rate, "seed": seed}
    return FeatureScoreTable(list(ds.feature_names), scores, "gbdt_importance", metadata=meta)


@dataclass(frozen=True)
class RcitConfig:
    num_fourier_features: int = 100
    alpha: float = 0.01
    num_permutations: int = 200
    seed: int = 0
    initialization: str = "none"
    ridge: float = 1e-3

    def __post_init__(self):
        if self.num_fourier_features < 1:
            raise ValueError("num_fourier_features must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.initialization not in ("none", "feature_importance"):
            raise ValueError("initialization must be 'none' or 'feature_importance'")


def _standardize(v):
    v = v.reshape(len(v), -1).astype(np.float64)
    sd = v.std(axis=0)
    keep = sd > 0
    return (v[:, keep] - v[:, keep].mean(axis=0)) / sd[keep]


def median_bandwidth(v):
    D = np.sqrt(((v[:, None, :] - v[None, :, :]) ** 2).sum(axis=-1))
    upper = D[np.triu_indices(len(v), k=1)]
    upper = upper[upper > 0]
    return float(np.median(upper)) if upper.size else 1.0


def fourier_features(v, num, rng):
    """Random Fourier features of a Gaussian kernel with median-heuristic bandwidth, centred."""
    v = _standardize(v)
    n = v.shape[0]
    if v.shape[1] == 0:
        return np.zeros((n, 0)), 0.0
    sigma = median_bandwidth(v)
    W = rng.normal(0.0, 1.0 / sigma, size=(v.shape[1], num))
    b = rng.uniform(0.0, 2 * np.pi, size=num)
    F = np.sqrt(2.0 / num) * np.cos(v @ W + b)
    return F - F.mean(axis=0), sigma


def _residualize(F, G, ridge):
    if G.shape[1] == 0:
        return F
    coef = np.linalg.solve(G.T @ G + ridge * np.eye(G.shape[1]), G.T @ F)
    return F - G @ coef


def rcit_test(x, y, z, cfg, rng):
    """Permutation p-value for x independent of y given z (z may have zero columns)."""
    n = len(x)
    fx, _ = fourier_features(x, cfg.num_fourier_features, rng)
    fy, _ = fourier_features(y, cfg.num_fourier_features, rng)
    fz, _ = fourier_features(z, cfg.num_fourier_features, rng) if z.shape[1] else (np.zeros((n, 0)), 0.0)
    rx = _residualize(fx, fz, cfg.ridge)
    ry = _residualize(fy, fz, cfg.ridge)
    stat = float(((rx.T @ ry / n) ** 2).sum())
    exceed = 0
    for _ in range(cfg.num_permutations):
        perm = rng.permutation(n)
        if float(((rx[perm].T @ ry / n) ** 2).sum()) >= stat:
            exceed += 1
    return stat, (1 + exceed) / (cfg.num_permutations + 1)


def rcit_dependence(ds, cfg=RcitConfig()):
    """Per-feature conditional dependence on the target.

    Conditioning set for feature j: every other non-constant feature
    (``initialization='none'``) or the features ranked above j by boosted-tree
    importance (``'feature_importance'``). Score is 1 - p.
    """
    X, y = _training(ds, 20)
    d = X.shape[1]
    if cfg.initialization == "feature_importance":
        ranking = gbdt_importance(ds, seed=cfg.seed).ranked()
        rank = {ds.feature_names.index(n): r for r, n in enumerate(ranking)}
    p_values = np.ones(d)
    stats = np.zeros(d)
    nonconstant = [j for j in range(d) if np.ptp(X[:, j]) > 0]
    for j in range(d):
        if j not in nonconstant:
            continue
        if cfg.initialization == "none":
            cond = [k for k in nonconstant if k != j]
        else:
            cond = [k for k in nonconstant if rank[k] < rank[j]]
        rng = np.random.default_rng([cfg.seed, j])
        stats[j], p_values[j] = rcit_test(X[:, j], y, X[:, cond], cfg, rng)
    meta = {
        "num_fourier_features": cfg.num_fourier_features,
        "alpha": cfg.alpha,
        "num_permutations": cfg.num_permutations,
        "initialization": cfg.initialization,
        "ridge": cfg.ridge,
        "bandwidth": "median pairwise distance of standardised inputs",
        "dependent": [ds.feature_names[j] for j in range(d) if p_values[j] < cfg.alpha],
        "statistics": stats.tolist(),
    }
    return FeatureScoreTable(list(ds.feature_names), 1.0 - p_values, "rcit_dependence", p_values=p_values, metadata=meta)


def select_features(scores, threshold=0.01, max_features=None):
    """Names with |score| > threshold, strongest first; optionally capped at ``max_features``."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    ranked = [n for n in scores.ranked() if abs(scores.as_dict()[n]) > threshold]
    if max_features is not None:
        ranked = ranked[:max_features]
    return ranked


def correlation_matrix(M):
    """Pearson matrix of the columns of ``M``; constant columns get 0 off the diagonal and 0 on it."""
    M = np.asarray(M, dtype=np.float64)
    C = M - M.mean(axis=0)
    ss = np.sqrt((C * C).sum(axis=0))
    ok = ss > 0
    R = np.zeros((M.shape[1], M.shape[1]))
    Z = C[:, ok] / ss[ok]
    R[np.ix_(ok, ok)] = np.clip(Z.T @ Z, -1.0, 1.0)
    R = 0.5 * (R + R.T)
    R[np.flatnonzero(ok), np.flatnonzero(ok)] = 1.0
    return R


def eda_summary(ds, bins=20):
    """Histograms, the (cycle, RUL) scatter and the feature+target correlation matrix (training split)."""
    X, y = ds.X_train, ds.y_train
    hists = {}
    for j, name in enumerate(ds.feature_names):
        counts, edges = np.histogram(X[:, j], bins=bins)
        hists[name] = {"counts": counts.tolist(), "edges": edges.tolist()}
    scatter = []
    if "cycle" in ds.feature_names:
        c = X[:, ds.feature_index("cycle")]
        scatter = [[float(a), float(b)] for a, b in zip(c, y)]
    labels = list(ds.feature_names) + ["RUL"]
    return {
        "histograms": hists,
        "cycle_rul": scatter,
        "labels": labels,
        "correlation": correlation_matrix(np.column_stack([X, y])).tolist(),
    }
