from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_NAME = "rulxai-model"
FORMAT_VERSION = 1

_REGISTRY = {}


class ModelError(RuntimeError):
    """Raised when fitting fails or a model is used incorrectly."""


def register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


class FittedModel:
    """Common surface of the four trained regressors.

    Subclasses implement ``_predict`` on a validated 2-D float array and the
    ``params``/``from_params`` pair used for JSON round trips.
    """

    kind = "base"

    def __init__(self, feature_names, spec, seed=0):
        self.feature_names = list(feature_names)
        self.spec = dict(spec)
        self.seed = int(seed)
        self.fit_info = {}

    @property
    def n_features(self):
        return len(self.feature_names)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1) if X.size else X.reshape(0, self.n_features)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected input with {self.n_features} columns, got shape {X.shape}")
        if X.shape[0] == 0:
            return np.empty(0)
        if not np.all(np.isfinite(X)):
            raise ValueError("input contains non-finite values")
        return self._predict(X)

    def _predict(self, X):
        raise NotImplementedError

    def params(self):
        raise NotImplementedError

    @classmethod
    def from_params(cls, feature_names, spec, seed, params):
        raise NotImplementedError

    def to_dict(self):
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "feature_names": self.feature_names,
            "spec": self.spec,
            "seed": self.seed,
            "params": self.params(),
        }

    def __repr__(self):
        return f"<{type(self).__name__} d={self.n_features}>"


def predict(model, X):
    return model.predict(X)


def model_from_dict(doc):
    if doc.get("format") != FORMAT_NAME:
        raise ModelError("not a serialized model document")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {doc.get('version')}")
    try:
        cls = _REGISTRY[doc["kind"]]
    except KeyError:
        raise ModelError(f"unknown model kind {doc.get('kind')!r}") from None
    return cls.from_params(doc["feature_names"], doc["spec"], doc["seed"], doc["params"])


def dumps_model(model):
    return json.dumps(model.to_dict(), indent=1, sort_keys=True)


def save_model(model, path):
    Path(path).write_text(dumps_model(model) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


def as_list(a):
    return np.asarray(a).tolist()
