import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FuncModel, LinearModel, make_dataset
from oracles import naive_ale
from rulxai import diagnose as dg
from rulxai import explain as ex
from rulxai.models import TreeSpec, fit_decision_tree
from rulxai.models.tree import DecisionTreeModel


@pytest.fixture(scope="module")
def lin_ds():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(200, 4))
    return make_dataset(X, X @ np.array([1.5, -2.0, 0.5, 0.0]))


# ----------------------------------------------------------------- PFI


def test_pfi_unused_feature_zero(engine1_selected):
    m = fit_decision_tree(engine1_selected, TreeSpec(max_depth=2))
    used = set(m.tree.feature[m.tree.feature >= 0].tolist())
    t = ex.permutation_importance(m, engine1_selected)
    for j in range(engine1_selected.n_features):
        if j not in used:
            assert t.scores[j] == 0.0


def test_pfi_perfect_predictor(lin_ds):
    t = ex.permutation_importance(LinearModel([1.0, 0, 0, 0]), make_dataset(lin_ds.X, lin_ds.X[:, 0]))
    assert t.scores[0] > 0 and np.all(t.scores[1:] == 0)


def test_pfi_cycle_first_all_models(engine1_selected, engine1_models):
    for m in engine1_models.values():
        assert ex.permutation_importance(m, engine1_selected).ranked()[0] == "cycle"


def test_pfi_feature_order_invariant_and_baseline(engine1_selected, engine1_models):
    m = engine1_models["tree"]
    names = engine1_selected.feature_names
    t1 = ex.permutation_importance(m, engine1_selected)
    perm = list(reversed(range(len(names))))
    ds2 = engine1_selected.select([names[k] for k in perm])
    m2 = FuncModel(lambda X: m.predict(X[:, np.argsort(perm)]))
    t2 = ex.permutation_importance(m2, ds2)
    assert t2.as_dict() == t1.as_dict()
    acc = dg.accuracy_report(m, engine1_selected)
    assert abs(t1.metadata["baseline_mse"] - acc["test"].mse) < 1e-12


def test_pfi_negative_kept_and_errors(lin_ds):
    noise = FuncModel(lambda X: np.sin(40 * X[:, 3]))
    t = ex.permutation_importance(noise, lin_ds, repeats=3)
    assert np.isfinite(t.scores).all()
    with pytest.raises(ValueError):
        ex.permutation_importance(noise, lin_ds, repeats=0)
    with pytest.raises(ValueError):
        ex.permutation_importance(noise, make_dataset(lin_ds.X, lin_ds.y, train_frac=1.0))


# ----------------------------------------------------------------- PDP / ALE


def test_pdp_linear_slope(lin_ds):
    w = np.array([1.5, -2.0, 0.5, 0.0])
    for j in range(4):
        c = ex.partial_dependence(LinearModel(w, 3.0), lin_ds, f"x{j}", grid_size=50)
        assert len(c.grid) == 50 and np.all(np.diff(c.grid) > 0)
        slope = np.diff(c.values) / np.diff(c.grid)
        np.testing.assert_allclose(slope, w[j], rtol=0, atol=1e-9)


def test_pdp_additive_equals_shape(lin_ds):
    f = FuncModel(lambda X: np.sin(3 * X[:, 0]) + X[:, 1] ** 2)
    c = ex.partial_dependence(f, lin_ds, "x0", grid_size=30)
    diff = c.values - np.sin(3 * c.grid)
    assert np.ptp(diff) < 1e-9


def test_pdp_constant_model_and_unique_grid(lin_ds):
    c = ex.partial_dependence(FuncModel(lambda X: np.full(len(X), 2.0)), lin_ds, "x1", grid_size=2)
    assert c.values.tolist() == [2.0, 2.0]
    ds = make_dataset(np.column_stack([np.repeat([0.0, 1.0, 2.0], 10), np.arange(30.0)]), np.arange(30.0))
    c = ex.partial_dependence(LinearModel([1, 0]), ds, "x0")
    assert c.grid.tolist() == [0.0, 1.0, 2.0]
    with pytest.raises(KeyError):
        ex.partial_dependence(LinearModel([1, 0]), ds, "nope")
    with pytest.raises(ValueError):
        ex.partial_dependence(LinearModel([1, 0]), ds, "x0", grid_size=1)


def test_ale_linear_slope_and_pdp_agreement(lin_ds):
    w = np.array([1.5, -2.0, 0.5, 0.0])
    m = LinearModel(w)
    for j in range(3):
        c = ex.accumulated_local_effects(m, lin_ds, f"x{j}")
        slope = np.diff(c.values) / np.diff(c.grid)
        np.testing.assert_allclose(slope, w[j], rtol=0, atol=1e-6)
        p = ex.partial_dependence(m, lin_ds, f"x{j}")
        assert abs(np.mean(np.diff(p.values) / np.diff(p.grid)) - np.mean(slope)) < 1e-6


def test_ale_matches_naive_oracle_depth3_tree(engine1_selected):
    m = fit_decision_tree(engine1_selected, TreeSpec(max_depth=3))
    for name in ("cycle", engine1_selected.feature_names[1]):
        c = ex.accumulated_local_effects(m, engine1_selected, name, num_bins=10)
        z, ale = naive_ale(m, engine1_selected.X_train, engine1_selected.feature_index(name), 10)
        np.testing.assert_array_equal(c.grid, z)
        np.testing.assert_allclose(c.values, ale, rtol=0, atol=1e-9)


def test_ale_constant_feature_error():
    ds = make_dataset(np.column_stack([np.ones(20), np.arange(20.0)]), np.arange(20.0))
    with pytest.raises(ValueError, match="constant"):
        ex.accumulated_local_effects(LinearModel([1, 1]), ds, "x0")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), bins=st.integers(1, 15))
def test_ale_weighted_mean_zero(seed, bins):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 2))
    X[:, 0] = np.round(X[:, 0], 1)
    if np.ptp(X[:40, 0]) == 0:
        return
    ds = make_dataset(X, X[:, 0])
    m = FuncModel(lambda A: np.tanh(A[:, 0]) * A[:, 1] + A[:, 0] ** 2)
    c = ex.accumulated_local_effects(m, ds, "x0", num_bins=bins)
    assert abs(ex.ale_weighted_mean(c)) < 1e-9
    assert np.all(np.diff(c.grid) > 0)
    assert sum(c.metadata["bin_counts"]) == 48


# ----------------------------------------------------------------- LIME


def test_lime_recovers_linear(lin_ds):
    w = np.array([1.5, -2.0, 0.5, 0.7])
    a = ex.lime_explain(LinearModel(w, 1.0), lin_ds, 3, num_samples=1000)
    coefs = np.array([a.metadata["coefficients"][f"x{j}"] for j in range(4)])
    np.testing.assert_allclose(coefs, w, rtol=0.05)
    assert abs(a.base_value - 1.0) < 1e-6


def test_lime_constant_model(lin_ds):
    a = ex.lime_explain(FuncModel(lambda X: np.full(len(X), 4.2)), lin_ds, 0)
    assert all(abs(v) < 1e-9 for v in a.metadata["coefficients"].values())
    assert abs(a.base_value - 4.2) < 1e-9


def test_lime_engine1_cycle_top(engine1_selected, engine1_models):
    for m in engine1_models.values():
        a = ex.lime_explain(m, engine1_selected, 0)
        assert a.ranked()[0] == "cycle"
        assert len(a.per_feature) == 10


def test_lime_determinism_and_scaling(engine1_selected, engine1_models):
    m = engine1_models["relu_dnn"]
    a = ex.lime_explain(m, engine1_selected, 5, seed=3)
    b = ex.lime_explain(m, engine1_selected, 5, seed=3)
    assert a.to_json() == b.to_json()
    scaled = FuncModel(lambda X: 2.5 * m.predict(X))
    c = ex.lime_explain(scaled, engine1_selected, 5, seed=3)
    for k, v in a.metadata["coefficients"].items():
        assert abs(c.metadata["coefficients"][k] - 2.5 * v) <= 1e-9 * max(1.0, abs(v))
    assert c.ranked()[0] == a.ranked()[0]


def test_lime_errors(lin_ds):
    m = LinearModel([1, 0, 0, 0])
    with pytest.raises(ValueError, match="kernel_width"):
        ex.lime_explain(m, lin_ds, 0, kernel_width=1e-6)
    with pytest.raises(ValueError):
        ex.lime_explain(m, lin_ds, 0, num_samples=5)
    with pytest.raises(IndexError):
        ex.lime_explain(m, lin_ds, 10_000)


# ----------------------------------------------------------------- Shapley


def test_shap_linear_closed_form(lin_ds):
    w = np.array([1.5, -2.0, 0.5, 0.7])
    bg = lin_ds.X_train[:30]
    a = ex.shapley_exact(LinearModel(w, 0.3), lin_ds, 7, background=bg)
    phi = np.array([a.per_feature[f"x{j}"] for j in range(4)])
    np.testing.assert_allclose(phi, w * (lin_ds.X[7] - bg.mean(axis=0)), rtol=0, atol=1e-9)


def test_shap_symmetry():
    X = np.array([[0.3, 0.3], [1.0, -1.0], [0.0, 2.0], [0.5, 0.1]])
    ds = make_dataset(X, X.sum(axis=1), train_frac=1.0)
    # the game is symmetric only if the background is symmetric in the two features too
    bg = np.vstack([X, X[:, ::-1]])
    a = ex.shapley_exact(FuncModel(lambda A: A[:, 0] + A[:, 1]), ds, 0, background=bg)
    assert abs(a.per_feature["x0"] - a.per_feature["x1"]) < 1e-12


def test_shap_efficiency_all_models(engine1_selected, engine1_models):
    rng = np.random.default_rng(0)
    for m in engine1_models.values():
        for i in rng.choice(engine1_selected.X.shape[0], 3, replace=False):
            a = ex.shapley_exact(m, engine1_selected, int(i))
            assert abs(a.total() - m.predict(engine1_selected.X[i : i + 1])[0]) < 1e-6


def test_shap_dummy_and_additivity(engine1_selected):
    t1 = fit_decision_tree(engine1_selected, TreeSpec(max_depth=2))
    t2 = fit_decision_tree(engine1_selected.select(engine1_selected.feature_names), TreeSpec(max_depth=3, min_samples_leaf=10))
    bg = engine1_selected.X_train[:40]
    a1 = ex.shapley_exact(t1, engine1_selected, 11, background=bg)
    a2 = ex.shapley_exact(t2, engine1_selected, 11, background=bg)
    both = FuncModel(lambda X: t1.predict(X) + t2.predict(X))
    a12 = ex.shapley_exact(both, engine1_selected, 11, background=bg)
    used = set(t1.tree.feature[t1.tree.feature >= 0].tolist())
    for j, name in enumerate(engine1_selected.feature_names):
        if j not in used:
            assert abs(a1.per_feature[name]) < 1e-9
        assert abs(a12.per_feature[name] - a1.per_feature[name] - a2.per_feature[name]) < 1e-9


def test_shap_feature_cap(engine1):
    with pytest.raises(ValueError, match="max_features"):
        ex.shapley_exact(LinearModel(np.zeros(25)), engine1, 0)


def test_shap_default_background_size(engine1_selected):
    bg = ex.default_background(engine1_selected)
    assert bg.shape[0] == 100
    assert np.array_equal(bg, ex.default_background(engine1_selected))


def test_serialisation_shapes(lin_ds):
    a = ex.shapley_exact(LinearModel([1, 2, 3, 4]), lin_ds, 0, background=lin_ds.X_train[:5])
    doc = json.loads(a.to_json())
    assert set(doc) >= {"method", "sample_index", "base_value", "features"}
    assert doc["features"][0] == {"name": "x0", "value": a.per_feature["x0"]}
    assert a.to_csv().splitlines()[0] == "feature,value,method,sample_index"
    c = ex.partial_dependence(LinearModel([1, 2, 3, 4]), lin_ds, "x2", 5)
    assert json.loads(c.to_json())["kind"] == "pdp"
    assert len(c.to_csv().splitlines()) == 6
    with pytest.raises(ValueError):
        ex.CurveSeries("x", [0, 1], [1], "pdp")


def test_dummy_model_class_is_tree():
    assert DecisionTreeModel.kind == "tree"
