"""Fully connected ReLU regression network trained with Adam in plain numpy."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .base import FittedModel, ModelError, as_list, register


@dataclass(frozen=True)
class ReluDnnSpec:
    layer_sizes: tuple = (40, 40)
    max_epochs: int = 1000
    learning_rate: float = 0.001
    batch_size: int = 500
    l1_regularization: float = 1e-5
    dropout: float = 0.0
    early_stop_epochs: int = 20
    seed: int = 0
    validation_fraction: float = 0.2
    adam_betas: tuple = field(default=(0.9, 0.999))
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.layer_sizes or any(int(s) < 1 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


def init_params(d, layer_sizes, rng):
    """Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    Returns a flat list [W1, b1, W2, b2, ...].
    """
    sizes = [d, *layer_sizes, 1]
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(rng.uniform(-limit, limit, size=fan_out))
    return params


def forward(params, X, keep_masks=None):
    """Returns the output vector and the per-layer cache needed for backprop."""
    h = X
    cache = []
    n_hidden = len(params) // 2 - 1
    for k in range(n_hidden):
        W, b = params[2 * k], params[2 * k + 1]
        z = h @ W + b
        a = np.where(z > 0, z, 0.0)
        if keep_masks is not None:
            a = a * keep_masks[k]
        cache.append((h, z))
        h = a
    out = h @ params[-2] + params[-1]
    cache.append((h, None))
    return out[:, 0], cache


def loss_and_grad(params, X, y, l1=0.0, keep_masks=None):
    """Mean squared error plus ``l1`` times the summed absolute weights (biases excluded)."""
    out, cache = forward(params, X, keep_masks)
    n = X.shape[0]
    resid = out - y
    loss = float(resid @ resid) / n
    loss += l1 * sum(float(np.abs(params[k]).sum()) for k in range(0, len(params), 2))
    grads = [None] * len(params)
    delta = (2.0 / n) * resid[:, None]
    n_layers = len(params) // 2
    for k in reversed(range(n_layers)):
        h_in = cache[k][0]
        W = params[2 * k]
        grads[2 * k] = h_in.T @ delta + l1 * np.sign(W)
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            _, z_prev = cache[k - 1]
            back = delta @ W.T
            if keep_masks is not None:
                back = back * keep_masks[k - 1]
            delta = back * (z_prev > 0)
    return loss, grads


@register
class ReluDnnModel(FittedModel):
    kind = "relu_dnn"

    def __init__(self, feature_names, spec, weights, biases, seed=0):
        super().__init__(feature_names, spec, seed)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]

    @property
    def param_list(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def _predict(self, X):
        return forward(self.param_list, X)[0]

    def preactivations(self, X):
        """Hidden-layer preactivations, one (n, width) array per hidden layer."""
        h = np.asarray(X, dtype=np.float64)
        zs = []
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            z = h @ W + b
            zs.append(z)
            h = np.where(z > 0, z, 0.0)
        return zs

    def activation_patterns(self, X):
        """Boolean (n, total hidden units) matrix; a unit is on when its preactivation is > 0."""
        zs = self.preactivations(X)
        return np.concatenate([z > 0 for z in zs], axis=1)

    def params(self):
        return {"weights": [as_list(w) for w in self.weights], "biases": [as_list(b) for b in self.biases]}

    @classmethod
    def from_params(cls, feature_names, spec, seed, params):
        return cls(feature_names, spec, params["weights"], params["biases"], seed)


def _adam_step(params, grads, m, v, t, lr, betas, eps):
    b1, b2 = betas
    for k in range(len(params)):
        m[k] = b1 * m[k] + (1 - b1) * grads[k]
        v[k] = b2 * v[k] + (1 - b2) * grads[k] ** 2
        m_hat = m[k] / (1 - b1**t)
        v_hat = v[k] / (1 - b2**t)
        params[k] = params[k] - lr * m_hat / (np.sqrt(v_hat) + eps)


def train_network(X, y, spec, rng, params=None, max_epochs=None, val=None):
    """Mini-batch Adam with early stopping; returns (best params, history dict).

    ``val`` is an optional (X_val, y_val) pair monitored for early stopping.
    """
    n, d = X.shape
    if params is None:
        params = init_params(d, spec.layer_sizes, rng)
    params = [p.copy() for p in params]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    batch = min(spec.batch_size, n)
    epochs = spec.max_epochs if max_epochs is None else max_epochs
    best = [p.copy() for p in params]
    best_loss, best_epoch = np.inf, 0
    history = {"train_loss": [], "val_loss": []}
    t = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            rows = order[start : start + batch]
            masks = None
            if spec.dropout > 0:
                keep = 1.0 - spec.dropout
                masks = [(rng.random((rows.size, w)) < keep) / keep for w in spec.layer_sizes]
            # divergence is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_grad(params, X[rows], y[rows], spec.l1_regularization, masks)
            if not np.isfinite(loss):
                raise ModelError(f"training diverged (non-finite loss) at epoch {epoch}")
            t += 1
            _adam_step(params, grads, m, v, t, spec.learning_rate, spec.adam_betas, spec.adam_eps)
        history["train_loss"].append(loss)
        if val is not None:
            with np.errstate(over="ignore", invalid="ignore"):
                out = forward(params, val[0])[0]
                monitor = float(np.mean((out - val[1]) ** 2))
            history["val_loss"].append(monitor)
        else:
            monitor = loss
        if not np.isfinite(monitor):
            raise ModelError(f"training diverged (non-finite loss) at epoch {epoch}")
        if monitor < best_loss:
            best_loss, best_epoch = monitor, epoch
            best = [p.copy() for p in params]
        elif epoch - best_epoch >= spec.early_stop_epochs:
            break
    history["best_epoch"] = best_epoch
    history["epochs"] = epoch
    return best, history


def fit_relu_dnn(ds, spec=ReluDnnSpec()):
    X, y = ds.X_train, ds.y_train
    n = X.shape[0]
    if n == 0:
        raise ModelError("empty training set")
    if n < 20:
        raise ModelError("ReLU-DNN needs at least 20 training rows")
    rng = np.random.default_rng(spec.seed)
    params = init_params(X.shape[1], spec.layer_sizes, rng)
    perm = rng.permutation(n)
    n_val = max(1, int(round(spec.validation_fraction * n)))
    val, fit = perm[:n_val], perm[n_val:]
    best, history = train_network(X[fit], y[fit], spec, rng, params=params, val=(X[val], y[val]))
    spec_doc = asdict(spec)
    spec_doc["layer_sizes"] = list(spec.layer_sizes)
    spec_doc["adam_betas"] = list(spec.adam_betas)
    model = ReluDnnModel(ds.feature_names, spec_doc, best[0::2], best[1::2], seed=spec.seed)
    model.fit_info = history
    return model
