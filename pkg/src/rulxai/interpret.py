"""Intrinsic interpretation of fitted models.

ReLU networks are unwrapped into the exact affine map of each activation
region, EBMs into their shape tables and trees into rule lists.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .explain import Attribution
from .feature_select import FeatureScoreTable
from .models.ebm import digitize


def _require(model, kinds):
    if model.kind not in kinds:
        raise ValueError(f"expected a model of kind {' or '.join(kinds)}, got {model.kind!r}")


@dataclass
class LocalLinearModel:
    pattern_id: np.ndarray
    coefficients: np.ndarray
    intercept: float
    support_count: int
    local_r2: float
    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def pattern_key(self):
        return "".join("1" if b else "0" for b in self.pattern_id)

    def predict(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coefficients + self.intercept

    def to_dict(self, feature_names=None):
        coefs = self.coefficients.tolist()
        if feature_names is not None:
            coefs = dict(zip(feature_names, coefs))
        return {
            "pattern": self.pattern_key,
            "coefficients": coefs,
            "intercept": float(self.intercept),
            "support_count": int(self.support_count),
            "local_r2": None if np.isnan(self.local_r2) else float(self.local_r2),
        }


def affine_map(model, pattern):
    """Coefficients and intercept of the network restricted to one activation pattern."""
    d = model.weights[0].shape[0]
    A = np.eye(d)
    c = np.zeros(d)
    start = 0
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        mask = pattern[start : start + W.shape[1]].astype(np.float64)
        start += W.shape[1]
        A = (A @ W) * mask
        c = (c @ W + b) * mask
    W_out, b_out = model.weights[-1], model.biases[-1]
    return (A @ W_out)[:, 0], float((c @ W_out + b_out)[0])


def _r2(y, p):
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0.0:
        return float("nan")
    return 1.0 - float(((y - p) ** 2).sum()) / sst


def extract_llms(model, ds):
    """One local linear model per distinct activation pattern on the training split.

    Ordered by support (largest first), ties by the first training row that
    falls in the region.
    """
    _require(model, ("relu_dnn",))
    X, y = ds.X_train, ds.y_train
    patterns = model.activation_patterns(X)
    uniq, first, inverse = np.unique(patterns, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    counts = np.bincount(inverse, minlength=len(uniq))
    order = sorted(range(len(uniq)), key=lambda r: (-counts[r], first[r]))
    llms = []
    for r in order:
        rows = np.flatnonzero(inverse == r)
        beta, icpt = affine_map(model, uniq[r])
        local = X[rows] @ beta + icpt
        llms.append(LocalLinearModel(uniq[r].copy(), beta, icpt, int(rows.size), _r2(y[rows], local), rows))
    return llms


def llm_feature_importance(llms, ds):
    """Support-weighted mean of |coefficient| times the feature's training std, normalised to sum 1."""
    if not llms:
        raise ValueError("empty list of local linear models")
    n = sum(m.support_count for m in llms)
    sd = ds.X_train.std(axis=0)
    raw = np.zeros(ds.n_features)
    for m in llms:
        raw += (m.support_count / n) * np.abs(m.coefficients) * sd
    total = raw.sum()
    scores = raw / total if total > 0 else raw
    meta = {"formula": "sum_r (support_r / n_train) * |beta_rj| * std_j, normalised", "n_llms": len(llms)}
    return FeatureScoreTable(list(ds.feature_names), scores, "llm_importance", threshold=0.0, metadata=meta)


def weighted_quantile(values, weights, q):
    """Smallest value whose cumulative weight reaches ``q`` of the total."""
    order = np.argsort(values, kind="stable")
    v, w = np.asarray(values)[order], np.asarray(weights, dtype=np.float64)[order]
    cum = np.cumsum(w)
    k = int(np.searchsorted(cum, q * cum[-1], side="left"))
    return float(v[min(k, v.size - 1)])


def llm_coefficient_views(llms, feature_names=None):
    """Parallel-coordinate rows (one per LLM) and support-weighted coefficient summaries per feature."""
    if not llms:
        raise ValueError("empty list of local linear models")
    B = np.array([m.coefficients for m in llms])
    w = np.array([m.support_count for m in llms], dtype=np.float64)
    d = B.shape[1]
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(d)]
    polylines = [
        {"pattern": m.pattern_key, "support_count": int(m.support_count), "coefficients": m.coefficients.tolist()}
        for m in llms
    ]
    summary = {}
    for j, name in enumerate(names):
        col = B[:, j]
        summary[name] = {
            "min": float(col.min()),
            "q1": weighted_quantile(col, w, 0.25),
            "median": weighted_quantile(col, w, 0.5),
            "q3": weighted_quantile(col, w, 0.75),
            "max": float(col.max()),
            "mean": float((w * col).sum() / w.sum()),
        }
    return {"features": names, "polylines": polylines, "summary": summary}


def parallel_csv(views):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["pattern", "support_count", *views["features"]])
    for p in views["polylines"]:
        wr.writerow([p["pattern"], p["support_count"], *[repr(float(c)) for c in p["coefficients"]]])
    return buf.getvalue()


@dataclass
class EbmTermView:
    term: str
    features: tuple
    bin_edges: list
    contributions: np.ndarray
    importance: float

    def lookup(self, X):
        X = np.asarray(X, dtype=np.float64)
        idx = tuple(digitize(X[:, f], e) for f, e in zip(self.features, self.bin_edges))
        return self.contributions[idx]

    def to_dict(self):
        return {
            "term": self.term,
            "bin_edges": [e.tolist() for e in self.bin_edges],
            "contributions": self.contributions.ravel().tolist(),
            "shape": list(self.contributions.shape),
            "importance": float(self.importance),
        }


def ebm_terms(model, ds):
    """Views of every main and pair term, sorted by importance (mean |contribution| on training rows)."""
    _require(model, ("ebm",))
    names = model.term_names()
    contrib = model.term_contributions(ds.X_train)
    importance = np.abs(contrib).mean(axis=0) if contrib.shape[0] else np.zeros(len(names))
    views = []
    for j, (cuts, table) in enumerate(zip(model.main_cuts, model.main_tables)):
        views.append(EbmTermView(names[j], (j,), [cuts], table, float(importance[j])))
    base = len(model.main_tables)
    for p, (i, j) in enumerate(model.pairs):
        edges = [model.pair_cuts[i], model.pair_cuts[j]]
        views.append(EbmTermView(names[base + p], (i, j), edges, model.pair_tables[p], float(importance[base + p])))
    order = sorted(range(len(views)), key=lambda k: (-views[k].importance, k))
    return [views[k] for k in order]


@dataclass
class Rule:
    tree: int
    conditions: list
    value: float
    n_samples: int

    def matches(self, X, feature_index):
        X = np.asarray(X, dtype=np.float64)
        ok = np.ones(X.shape[0], dtype=bool)
        for name, op, thr in self.conditions:
            col = X[:, feature_index[name]]
            ok &= (col <= thr) if op == "<=" else (col > thr)
        return ok

    def text(self):
        cond = " and ".join(f"{n} {op} {thr:.6g}" for n, op, thr in self.conditions) or "always"
        return f"if {cond} then {self.value:.6g}"

    def to_dict(self):
        return {
            "tree": self.tree,
            "conditions": [[n, op, float(t)] for n, op, t in self.conditions],
            "value": float(self.value),
            "n_samples": int(self.n_samples),
        }


def tree_structure(model):
    """Rule list per tree (one rule per leaf) plus size summaries."""
    _require(model, ("tree", "figs"))
    names = model.feature_names
    rules, summaries = [], []
    for t, tree in enumerate(model.trees):
        stack = [(0, [])]
        tree_rules = []
        while stack:
            node, conds = stack.pop()
            if tree.feature[node] < 0:
                tree_rules.append(Rule(t, conds, float(tree.value[node]), int(tree.n_samples[node])))
                continue
            name, thr = names[tree.feature[node]], float(tree.threshold[node])
            stack.append((int(tree.right[node]), conds + [(name, ">", thr)]))
            stack.append((int(tree.left[node]), conds + [(name, "<=", thr)]))
        rules += tree_rules
        summaries.append({"tree": t, "n_leaves": len(tree_rules), "n_splits": tree.n_splits(), "depth": tree.depth()})
    return {"rules": rules, "trees": summaries}


def evaluate_rules(rules, X, feature_names):
    """Sum over trees of the value of the matching rule; raises if a row matches != 1 rule in some tree."""
    index = {n: j for j, n in enumerate(feature_names)}
    X = np.asarray(X, dtype=np.float64)
    out = np.zeros(X.shape[0])
    hits = {}
    for r in rules:
        m = r.matches(X, index)
        hits[r.tree] = hits.get(r.tree, 0) + m.astype(np.int64)
        out += np.where(m, r.value, 0.0)
    if any((h != 1).any() for h in hits.values()):
        raise ValueError("rule list is not a partition")
    return out


def structure_json(structure):
    doc = {"rules": [r.to_dict() for r in structure["rules"]], "trees": structure["trees"]}
    return json.dumps(doc, indent=1, sort_keys=True)


def local_contribution(model, ds, sample_index):
    """Exact intrinsic decomposition of one prediction; ``base_value + sum(per_feature)`` is the prediction."""
    if not 0 <= sample_index < ds.X.shape[0]:
        raise IndexError(f"sample_index {sample_index} outside dataset of {ds.X.shape[0]} rows")
    x = ds.X[sample_index]
    names = list(model.feature_names)
    if model.kind == "relu_dnn":
        pattern = model.activation_patterns(x[None, :])[0]
        beta, icpt = affine_map(model, pattern)
        per = dict(zip(names, (beta * x).tolist()))
        meta = {"coefficients": dict(zip(names, beta.tolist())), "pattern": "".join("1" if b else "0" for b in pattern)}
        return Attribution("llm_effect", int(sample_index), icpt, per, meta)
    if model.kind == "ebm":
        contrib = model.term_contributions(x[None, :])[0]
        return Attribution("ebm_terms", int(sample_index), model.intercept, dict(zip(model.term_names(), contrib.tolist())))
    if model.kind in ("tree", "figs"):
        per = np.zeros(len(names))
        base = 0.0
        for tree in model.trees:
            path = tree.decision_path(x)
            base += float(tree.value[path[0]])
            for parent, child in zip(path[:-1], path[1:]):
                per[tree.feature[parent]] += tree.value[child] - tree.value[parent]
        return Attribution("path", int(sample_index), base, dict(zip(names, per.tolist())), {"n_trees": len(model.trees)})
    raise ValueError(f"unsupported model kind {model.kind!r}")
