import os

import numpy as np
import pytest

from rulxai import feature_select as fs
from rulxai.ingest import SplitSpec, TabularDataset, build_dataset, load_records
from rulxai.models import MODEL_KINDS, fit_model
from rulxai.synthetic import write_phm08_like

PHM08_ENV = "RULXAI_PHM08_TRAIN"


def make_dataset(X, y, train_frac=0.8, names=None, seed=0):
    """TabularDataset around raw arrays; the first train_frac of rows form the training split."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    train = np.zeros(n, dtype=bool)
    train[: int(round(train_frac * n))] = True
    return TabularDataset(
        feature_names=list(names or [f"x{j}" for j in range(X.shape[1])]),
        X=X,
        y=y,
        unit_ids=np.ones(n, dtype=np.int64),
        train_mask=train,
        test_mask=~train,
        seed=seed,
    )


class LinearModel:
    """Stand-in model computing w.x + b."""

    kind = "linear"

    def __init__(self, w, b=0.0):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = float(b)

    def predict(self, X):
        return np.asarray(X, dtype=np.float64) @ self.w + self.b


class FuncModel:
    kind = "func"

    def __init__(self, f):
        self.f = f

    def predict(self, X):
        return np.asarray(self.f(np.asarray(X, dtype=np.float64)), dtype=np.float64)


@pytest.fixture(scope="session")
def surrogate_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "train_like.txt"
    write_phm08_like(path, n_units=3, seed=0)
    return path


@pytest.fixture(scope="session")
def engine1(surrogate_path):
    return build_dataset(load_records(surrogate_path), unit_filter=1, split=SplitSpec(0.2, 0))


@pytest.fixture(scope="session")
def engine1_selected(engine1):
    names = fs.select_features(fs.pearson_scores(engine1), 0.01, max_features=15)
    return engine1.select(names)


@pytest.fixture(scope="session")
def engine1_models(engine1_selected):
    return {kind: fit_model(kind, engine1_selected) for kind in MODEL_KINDS}


@pytest.fixture(scope="session")
def real_engine1():
    path = os.environ.get(PHM08_ENV)
    if not path or not os.path.exists(path):
        pytest.skip(f"set {PHM08_ENV} to the PHM08 training file to run the real-data variant")
    return build_dataset(load_records(path), unit_filter=1, split=SplitSpec(0.2, 0))
