"""The four interpretable regressors behind a shared ``predict`` contract."""

from .base import FittedModel, ModelError, dumps_model, load_model, model_from_dict, predict, save_model
from .ebm import EbmModel, EbmSpec, fit_ebm
from .relu import ReluDnnModel, ReluDnnSpec, fit_relu_dnn
from .tree import DecisionTreeModel, FigsModel, FigsSpec, TreeSpec, fit_decision_tree, fit_figs

MODEL_KINDS = ("tree", "figs", "ebm", "relu_dnn")

_FITTERS = {
    "tree": (TreeSpec, fit_decision_tree),
    "figs": (FigsSpec, fit_figs),
    "ebm": (EbmSpec, fit_ebm),
    "relu_dnn": (ReluDnnSpec, fit_relu_dnn),
}


def default_spec(kind):
    return _FITTERS[kind][0]()


def spec_from_dict(kind, doc):
    cls = _FITTERS[kind][0]
    doc = dict(doc or {})
    for key in ("layer_sizes", "adam_betas"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return cls(**doc)


def fit_model(kind, ds, spec=None):
    """Fit ``kind`` on the training split of ``ds`` (default hyperparameters when ``spec`` is None)."""
    try:
        spec_cls, fitter = _FITTERS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}") from None
    if spec is None:
        spec = spec_cls()
    elif isinstance(spec, dict):
        spec = spec_from_dict(kind, spec)
    return fitter(ds, spec)


def refit(model, ds):
    """Fit a new model of the same kind and hyperparameters on ``ds``."""
    return fit_model(model.kind, ds, spec_from_dict(model.kind, model.spec))


__all__ = [
    "MODEL_KINDS",
    "DecisionTreeModel",
    "EbmModel",
    "EbmSpec",
    "FigsModel",
    "FigsSpec",
    "FittedModel",
    "ModelError",
    "ReluDnnModel",
    "ReluDnnSpec",
    "TreeSpec",
    "default_spec",
    "dumps_model",
    "fit_decision_tree",
    "fit_ebm",
    "fit_figs",
    "fit_model",
    "fit_relu_dnn",
    "load_model",
    "model_from_dict",
    "predict",
    "refit",
    "save_model",
    "spec_from_dict",
]
