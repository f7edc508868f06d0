"""Explainable boosting machine: bagged, cyclically boosted shape functions plus pairwise terms."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np

from .base import FittedModel, ModelError, as_list, register

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EbmSpec:
    n_interactions: int = 10
    outer_bags: int = 8
    inner_bags: int = 0
    max_bins: int = 256
    max_interaction_bins: int = 32
    max_rounds: int = 5000
    early_stop_rounds: int = 50
    early_stop_tol: float = 1e-4
    learning_rate: float = 0.01
    validation_fraction: float = 0.15
    max_leaves: int = 3
    min_samples_leaf: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.outer_bags < 1:
            raise ValueError("outer_bags must be >= 1")
        if self.max_interaction_bins > self.max_bins:
            raise ValueError("max_interaction_bins cannot exceed max_bins")
        if self.max_leaves not in (2, 3):
            raise ValueError("max_leaves must be 2 or 3")


def bin_cuts(col, max_bins):
    """Cut points giving at most ``max_bins`` bins.

    Every distinct value gets its own bin when there are few enough of them;
    otherwise cuts sit at interior quantiles.
    """
    uniq = np.unique(col)
    if uniq.size <= max_bins:
        return 0.5 * (uniq[1:] + uniq[:-1])
    qs = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
    return np.unique(qs)


def digitize(col, cuts):
    return np.searchsorted(cuts, col, side="right")


def _segment_gain(S, C, lo, hi, min_leaf):
    """Best single cut of bins [lo, hi); returns (gain, cut) with cut = first bin of the right side."""
    s = S[lo:hi]
    c = C[lo:hi]
    cs, cc = np.cumsum(s)[:-1], np.cumsum(c)[:-1]
    ts, tc = s.sum(), c.sum()
    if cs.size == 0 or tc < 2 * min_leaf:
        return 0.0, -1
    rc = tc - cc
    ok = (cc >= min_leaf) & (rc >= min_leaf)
    if not ok.any():
        return 0.0, -1
    with np.errstate(divide="ignore", invalid="ignore"):
        gains = cs**2 / cc + (ts - cs) ** 2 / rc - ts**2 / tc
    gains = np.where(ok, gains, -np.inf)
    k = int(np.argmax(gains))
    return float(gains[k]), lo + k + 1


def fit_bin_tree(S, C, max_leaves=3, min_leaf=2):
    """Piecewise-constant fit with at most ``max_leaves`` segments along a binned axis.

    ``S`` and ``C`` are per-bin residual sums and row counts. Returns per-bin
    segment means.
    """
    B = S.size
    cuts = []
    gain, cut = _segment_gain(S, C, 0, B, min_leaf)
    if cut > 0 and gain > 0:
        cuts.append(cut)
        if max_leaves >= 3:
            gl, cl = _segment_gain(S, C, 0, cut, min_leaf)
            gr, cr = _segment_gain(S, C, cut, B, min_leaf)
            if max(gl, gr) > 0:
                cuts.append(cl if gl >= gr else cr)
    bounds = [0, *sorted(cuts), B]
    out = np.empty(B)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        c = C[lo:hi].sum()
        out[lo:hi] = S[lo:hi].sum() / c if c > 0 else 0.0
    return out


def _quadrant_fit(G, N, min_leaf):
    """Best (row cut, column cut) pair for a 4-quadrant fit of a 2-D binned residual grid.

    Returns (gain, per-cell update grid).
    """
    P = np.zeros((G.shape[0] + 1, G.shape[1] + 1))
    Q = np.zeros_like(P)
    P[1:, 1:] = G.cumsum(0).cumsum(1)
    Q[1:, 1:] = N.cumsum(0).cumsum(1)
    TS, TN = P[-1, -1], Q[-1, -1]
    # quadrant sums for cuts a (rows < a) and b (cols < b), a,b >= 1
    s00, n00 = P[1:-1, 1:-1], Q[1:-1, 1:-1]
    s0_, n0_ = P[1:-1, -1:], Q[1:-1, -1:]
    s_0, n_0 = P[-1:, 1:-1], Q[-1:, 1:-1]
    s01, n01 = s0_ - s00, n0_ - n00
    s10, n10 = s_0 - s00, n_0 - n00
    s11, n11 = TS - s00 - s01 - s10, TN - n00 - n01 - n10
    if s00.size == 0 or TN == 0:
        return 0.0, None
    gains = -(TS**2) / TN
    ok = np.ones(s00.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for s, n in ((s00, n00), (s01, n01), (s10, n10), (s11, n11)):
            gains = gains + np.where(n > 0, s**2 / np.where(n > 0, n, 1), 0.0)
            ok &= n >= min_leaf
    gains = np.where(ok, gains, -np.inf)
    idx = int(np.argmax(gains))
    best = float(gains.flat[idx])
    if not np.isfinite(best) or best <= 0:
        return 0.0, None
    a, b = np.unravel_index(idx, s00.shape)
    a, b = a + 1, b + 1
    upd = np.empty(G.shape)
    for rows in (slice(0, a), slice(a, None)):
        for cols in (slice(0, b), slice(b, None)):
            n = N[rows, cols].sum()
            upd[rows, cols] = G[rows, cols].sum() / n if n > 0 else 0.0
    return best, upd


class _EarlyStop:
    def __init__(self, rounds, tol):
        self.rounds, self.tol = rounds, tol
        self.ref = np.inf
        self.best = np.inf
        self.last_gain_round = 0

    def update(self, rnd, score):
        """Record a validation score; returns (is_new_best, should_stop).

        An improvement counts only when it exceeds ``tol`` relative to the
        reference score.
        """
        if score < self.ref - self.tol * abs(self.ref) or not np.isfinite(self.ref):
            self.ref = score
            self.last_gain_round = rnd
        new_best = score < self.best
        if new_best:
            self.best = score
        return new_best, rnd - self.last_gain_round >= self.rounds


@register
class EbmModel(FittedModel):
    kind = "ebm"

    def __init__(self, feature_names, spec, intercept, main_cuts, main_tables, pairs, pair_cuts, pair_tables, seed=0):
        super().__init__(feature_names, spec, seed)
        self.intercept = float(intercept)
        self.main_cuts = [np.asarray(c, dtype=np.float64) for c in main_cuts]
        self.main_tables = [np.asarray(t, dtype=np.float64) for t in main_tables]
        self.pairs = [tuple(int(i) for i in p) for p in pairs]
        self.pair_cuts = [np.asarray(c, dtype=np.float64) for c in pair_cuts]
        self.pair_tables = [np.asarray(t, dtype=np.float64) for t in pair_tables]

    def term_names(self):
        names = list(self.feature_names)
        names += [f"{self.feature_names[i]} x {self.feature_names[j]}" for i, j in self.pairs]
        return names

    def term_contributions(self, X):
        """(n, n_terms) matrix of per-term lookups; row sums plus intercept give the prediction."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty((X.shape[0], len(self.main_tables) + len(self.pairs)))
        for j, (cuts, table) in enumerate(zip(self.main_cuts, self.main_tables)):
            out[:, j] = table[digitize(X[:, j], cuts)]
        base = len(self.main_tables)
        for p, (i, j) in enumerate(self.pairs):
            bi = digitize(X[:, i], self.pair_cuts[i])
            bj = digitize(X[:, j], self.pair_cuts[j])
            out[:, base + p] = self.pair_tables[p][bi, bj]
        return out

    def _predict(self, X):
        return self.intercept + self.term_contributions(X).sum(axis=1)

    def params(self):
        return {
            "intercept": self.intercept,
            "main_cuts": [as_list(c) for c in self.main_cuts],
            "main_tables": [as_list(t) for t in self.main_tables],
            "pairs": [list(p) for p in self.pairs],
            "pair_cuts": [as_list(c) for c in self.pair_cuts],
            "pair_tables": [as_list(t) for t in self.pair_tables],
        }

    @classmethod
    def from_params(cls, feature_names, spec, seed, params):
        return cls(feature_names, spec, seed=seed, **params)


class _Bag:
    """State of one outer bag: its rows and its additive tables."""

    def __init__(self, fit_rows, val_rows, y, n_bins):
        self.fit_rows = fit_rows
        self.val_rows = val_rows
        self.intercept = float(y[fit_rows].mean())
        self.main = [np.zeros(b) for b in n_bins]
        self.pairs = []


def _boost_mains(bag, bins, y, spec):
    fit, val = bag.fit_rows, bag.val_rows
    fb = [b[fit] for b in bins]
    vb = [b[val] for b in bins]
    resid = y[fit] - bag.intercept
    val_pred = np.full(val.size, bag.intercept)
    counts = [np.bincount(b, minlength=t.size).astype(np.float64) for b, t in zip(fb, bag.main)]
    stopper = _EarlyStop(spec.early_stop_rounds, spec.early_stop_tol)
    best_tables = [t.copy() for t in bag.main]
    rounds = 0
    for rnd in range(1, spec.max_rounds + 1):
        for j, table in enumerate(bag.main):
            S = np.bincount(fb[j], weights=resid, minlength=table.size)
            upd = spec.learning_rate * fit_bin_tree(S, counts[j], spec.max_leaves, spec.min_samples_leaf)
            table += upd
            resid -= upd[fb[j]]
            val_pred += upd[vb[j]]
        rounds = rnd
        score = float(np.mean((y[val] - val_pred) ** 2))
        new_best, stop = stopper.update(rnd, score)
        if new_best:
            best_tables = [t.copy() for t in bag.main]
        if stop:
            break
    bag.main = best_tables
    return rounds


def _main_prediction(bag, bins, rows):
    out = np.full(rows.size, bag.intercept)
    for b, table in zip(bins, bag.main):
        out += table[b[rows]]
    return out


def _pair_gains(bag, pair_bins, pair_nbins, y, candidates, min_leaf):
    fit = bag.fit_rows
    resid = y[fit] - _main_prediction(bag, bag._bins, fit)
    gains = {}
    for i, j in candidates:
        bi, bj = pair_bins[i][fit], pair_bins[j][fit]
        shape = (pair_nbins[i], pair_nbins[j])
        flat = bi * shape[1] + bj
        G = np.bincount(flat, weights=resid, minlength=shape[0] * shape[1]).reshape(shape)
        N = np.bincount(flat, minlength=shape[0] * shape[1]).reshape(shape).astype(np.float64)
        gains[(i, j)] = _quadrant_fit(G, N, min_leaf)[0]
    return gains


def _boost_pairs(bag, bins, pair_bins, pair_nbins, pairs, y, spec):
    fit, val = bag.fit_rows, bag.val_rows
    resid = y[fit] - _main_prediction(bag, bins, fit)
    val_pred = _main_prediction(bag, bins, val)
    tables = [np.zeros((pair_nbins[i], pair_nbins[j])) for i, j in pairs]
    flat_fit, flat_val, counts = [], [], []
    for i, j in pairs:
        w = pair_nbins[j]
        flat_fit.append(pair_bins[i][fit] * w + pair_bins[j][fit])
        flat_val.append(pair_bins[i][val] * w + pair_bins[j][val])
        counts.append(np.bincount(flat_fit[-1], minlength=pair_nbins[i] * w).astype(np.float64))
    stopper = _EarlyStop(spec.early_stop_rounds, spec.early_stop_tol)
    stopper.update(0, float(np.mean((y[val] - val_pred) ** 2)))
    best_tables = [t.copy() for t in tables]
    rounds = 0
    for rnd in range(1, spec.max_rounds + 1):
        for p, table in enumerate(tables):
            G = np.bincount(flat_fit[p], weights=resid, minlength=table.size).reshape(table.shape)
            _, upd = _quadrant_fit(G, counts[p].reshape(table.shape), spec.min_samples_leaf)
            if upd is None:
                continue
            upd = spec.learning_rate * upd
            table += upd
            resid -= upd.ravel()[flat_fit[p]]
            val_pred += upd.ravel()[flat_val[p]]
        rounds = rnd
        new_best, stop = stopper.update(rnd, float(np.mean((y[val] - val_pred) ** 2)))
        if new_best:
            best_tables = [t.copy() for t in tables]
        if stop:
            break
    bag.pairs = best_tables
    return rounds


def fit_ebm(ds, spec=EbmSpec()):
    """Fit a bagged GA2M.

    Each outer bag is a seeded random partition of the training rows into a
    boosting part and a validation slice. It boosts one shallow binned tree per
    feature per round until the validation MSE stalls, and then boosts the
    selected pairwise terms the same way. Pairs are ranked once across all
    bags so the bag tables can be averaged term by term.
    """
    X, y = ds.X_train, ds.y_train
    n, d = X.shape
    if n == 0:
        raise ModelError("empty training set")
    if n < 20:
        raise ModelError("EBM needs at least 20 training rows")
    rng = np.random.default_rng(spec.seed)
    main_cuts = [bin_cuts(X[:, j], spec.max_bins) for j in range(d)]
    bins = [digitize(X[:, j], c) for j, c in enumerate(main_cuts)]
    n_bins = [c.size + 1 for c in main_cuts]

    bags = []
    for _ in range(spec.outer_bags):
        perm = rng.permutation(n)
        n_val = max(1, int(round(spec.validation_fraction * n)))
        val, fit = np.sort(perm[:n_val]), np.sort(perm[n_val:])
        bag = _Bag(fit, val, y, n_bins)
        bag._bins = bins
        bags.append(bag)
    main_rounds = [_boost_mains(bag, bins, y, spec) for bag in bags]

    pairs = []
    pair_cuts = []
    pair_rounds = []
    n_inter = spec.n_interactions
    if n_inter > 0 and d < 2:
        warnings.warn("fewer than two features; interaction terms skipped", stacklevel=2)
        n_inter = 0
    if n_inter > 0:
        pair_cuts = [bin_cuts(X[:, j], spec.max_interaction_bins) for j in range(d)]
        pair_bins = [digitize(X[:, j], c) for j, c in enumerate(pair_cuts)]
        pair_nbins = [c.size + 1 for c in pair_cuts]
        candidates = [(i, j) for i, j in combinations(range(d), 2) if pair_nbins[i] > 1 and pair_nbins[j] > 1]
        total = dict.fromkeys(candidates, 0.0)
        for bag in bags:
            for key, g in _pair_gains(bag, pair_bins, pair_nbins, y, candidates, spec.min_samples_leaf).items():
                total[key] += g
        ranked = sorted(candidates, key=lambda p: (-total[p], p))
        pairs = [p for p in ranked[:n_inter] if total[p] > 0]
        if pairs:
            pair_rounds = [_boost_pairs(bag, bins, pair_bins, pair_nbins, pairs, y, spec) for bag in bags]

    bag_models = [
        EbmModel(
            ds.feature_names,
            asdict(spec),
            bag.intercept,
            main_cuts,
            bag.main,
            pairs,
            pair_cuts if pairs else [],
            bag.pairs if pairs else [],
            seed=spec.seed,
        )
        for bag in bags
    ]

    # center every term on the training distribution and fold the offsets into the intercept
    intercept = 0.0
    mains = [np.zeros(b) for b in n_bins]
    pair_tables = [np.zeros((len(pair_cuts[i]) + 1, len(pair_cuts[j]) + 1)) for i, j in pairs]
    for bag in bags:
        intercept += bag.intercept
        for j, t in enumerate(bag.main):
            mains[j] += t
        for p, t in enumerate(bag.pairs):
            pair_tables[p] += t
    intercept /= len(bags)
    mains = [t / len(bags) for t in mains]
    pair_tables = [t / len(bags) for t in pair_tables]
    for j, t in enumerate(mains):
        w = np.bincount(bins[j], minlength=t.size)
        shift = float(w @ t) / n
        mains[j] = t - shift
        intercept += shift
    if pairs:
        for p, (i, j) in enumerate(pairs):
            t = pair_tables[p]
            w = np.bincount(pair_bins[i] * t.shape[1] + pair_bins[j], minlength=t.size).reshape(t.shape)
            shift = float((w * t).sum()) / n
            pair_tables[p] = t - shift
            intercept += shift

    model = EbmModel(
        ds.feature_names,
        asdict(spec),
        intercept,
        main_cuts,
        mains,
        pairs,
        pair_cuts if pairs else [],
        pair_tables,
        seed=spec.seed,
    )
    model.bag_models = bag_models
    model.fit_info = {"main_rounds": main_rounds, "pair_rounds": pair_rounds, "pairs": [list(p) for p in pairs]}
    return model
