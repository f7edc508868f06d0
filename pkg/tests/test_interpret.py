import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from rulxai import interpret as it
from rulxai.models import DecisionTreeModel, EbmModel, ReluDnnSpec, TreeSpec, fit_decision_tree, fit_relu_dnn
from rulxai.models.relu import ReluDnnModel
from rulxai.models.tree import Tree


def eval_predicate(conditions, x, names):
    for name, op, thr in conditions:
        v = x[names.index(name)]
        if op == "<=" and not v <= thr:
            return False
        if op == ">" and not v > thr:
            return False
    return True


# ----------------------------------------------------------------- LLMs


def test_all_positive_network_single_region():
    rng = np.random.default_rng(0)
    W1, W2, W3 = rng.uniform(0.1, 1, (3, 4)), rng.uniform(0.1, 1, (4, 4)), rng.normal(size=(4, 1))
    m = ReluDnnModel(["a", "b", "c"], {}, [W1, W2, W3], [np.full(4, 0.1), np.full(4, 0.1), np.zeros(1)])
    X = rng.uniform(0, 1, (50, 3))
    ds = make_dataset(X, rng.normal(size=50), train_frac=1.0, names=["a", "b", "c"])
    llms = it.extract_llms(m, ds)
    assert len(llms) == 1 and llms[0].support_count == 50
    np.testing.assert_allclose(llms[0].coefficients, (W1 @ W2 @ W3)[:, 0], rtol=1e-12)


def test_llm_exactness_and_partition(engine1_selected, engine1_models):
    m = engine1_models["relu_dnn"]
    llms = it.extract_llms(m, engine1_selected)
    X = engine1_selected.X_train
    assert sum(l.support_count for l in llms) == X.shape[0]
    assert len(llms) <= X.shape[0]
    rows = np.concatenate([l.rows for l in llms])
    assert np.array_equal(np.sort(rows), np.arange(X.shape[0]))
    worst = max(np.abs(l.predict(X[l.rows]) - m.predict(X[l.rows])).max() for l in llms)
    assert worst < 1e-6
    assert it.llm_feature_importance(llms, engine1_selected).ranked()[0] == "cycle"


def test_llm_importance_linear_target():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(400, 3))
    ds = make_dataset(X, 3 * X[:, 0], train_frac=1.0)
    m = fit_relu_dnn(ds)
    imp = it.llm_feature_importance(it.extract_llms(m, ds), ds)
    assert imp.scores[0] > 0.95
    assert abs(imp.scores.sum() - 1) < 1e-12


def test_llm_importance_constant_feature_zero():
    rng = np.random.default_rng(2)
    X = np.column_stack([rng.uniform(size=100), np.full(100, 0.5)])
    ds = make_dataset(X, X[:, 0], train_frac=1.0)
    m = fit_relu_dnn(ds, ReluDnnSpec(max_epochs=20))
    assert it.llm_feature_importance(it.extract_llms(m, ds), ds).scores[1] == 0.0


def test_coefficient_views():
    one = it.LocalLinearModel(np.array([True]), np.array([1.0, -2.0]), 0.5, 7, 1.0)
    v = it.llm_coefficient_views([one], ["a", "b"])
    for j, name in enumerate(["a", "b"]):
        s = v["summary"][name]
        assert s["q1"] == s["median"] == s["q3"] == s["min"] == s["max"] == one.coefficients[j]
    rng = np.random.default_rng(3)
    llms = [it.LocalLinearModel(np.array([k % 2 == 0]), rng.normal(size=3), 0.0, int(rng.integers(1, 9)), 0.0) for k in range(6)]
    v = it.llm_coefficient_views(llms)
    assert len(v["polylines"]) == 6
    w = [l.support_count for l in llms]
    for j in range(3):
        direct = sum(wi * l.coefficients[j] for wi, l in zip(w, llms)) / sum(w)
        assert abs(v["summary"][f"x{j}"]["mean"] - direct) < 1e-12
    assert len(it.parallel_csv(v).splitlines()) == 7
    with pytest.raises(ValueError):
        it.llm_coefficient_views([])


@settings(max_examples=40, deadline=None)
@given(vals=st.lists(st.floats(-10, 10), min_size=1, max_size=20), q=st.floats(0, 1))
def test_weighted_quantile_unit_weights_in_range(vals, q):
    v = it.weighted_quantile(np.array(vals), np.ones(len(vals)), q)
    assert min(vals) <= v <= max(vals)


def test_extract_llms_wrong_kind(engine1_selected, engine1_models):
    with pytest.raises(ValueError, match="relu_dnn"):
        it.extract_llms(engine1_models["tree"], engine1_selected)


# ----------------------------------------------------------------- EBM terms


def test_ebm_terms_reconstruct_and_rank(engine1_selected, engine1_models):
    m = engine1_models["ebm"]
    views = it.ebm_terms(m, engine1_selected)
    assert len(views) == m.n_features + len(m.pairs)
    imps = [v.importance for v in views]
    assert imps == sorted(imps, reverse=True) and min(imps) >= 0
    assert views[0].term == "cycle"
    X = np.random.default_rng(4).uniform(-0.1, 1.1, size=(20, m.n_features))
    recon = m.intercept + sum(v.lookup(X) for v in views)
    np.testing.assert_allclose(recon, m.predict(X), rtol=0, atol=1e-12)
    doc = views[0].to_dict()
    assert len(doc["contributions"]) == len(doc["bin_edges"][0]) + 1


def test_ebm_zero_term_importance():
    m = EbmModel(["a", "b"], {}, 1.0, [np.array([0.5]), np.array([0.5])], [np.zeros(2), np.array([1.0, -1.0])], [], [np.zeros(0), np.zeros(0)], [])
    ds = make_dataset(np.random.default_rng(5).uniform(size=(20, 2)), np.zeros(20), names=["a", "b"])
    views = {v.term: v for v in it.ebm_terms(m, ds)}
    assert views["a"].importance == 0.0 and views["b"].importance == 1.0


# ----------------------------------------------------------------- rules


def test_single_leaf_rule():
    t = Tree([-1], [0.0], [-1], [-1], [3.0], [10], [0.0])
    s = it.tree_structure(DecisionTreeModel(["a"], {}, t))
    assert len(s["rules"]) == 1 and s["rules"][0].conditions == []
    assert s["rules"][0].text() == "if always then 3"


@pytest.mark.parametrize("kind", ["tree", "figs"])
def test_rules_match_predict(engine1_selected, engine1_models, kind):
    m = engine1_models[kind]
    s = it.tree_structure(m)
    assert len(s["rules"]) == sum(len(t.leaves()) for t in m.trees)
    names = list(m.feature_names)
    probe = np.random.default_rng(6).uniform(-0.1, 1.1, size=(50, m.n_features))
    for x, p in zip(probe, m.predict(probe)):
        total = 0.0
        for k in range(len(m.trees)):
            hits = [r for r in s["rules"] if r.tree == k and eval_predicate(r.conditions, x, names)]
            assert len(hits) == 1
            total += hits[0].value
        assert total == p
    np.testing.assert_array_equal(it.evaluate_rules(s["rules"], probe, names), m.predict(probe))
    assert json.loads(it.structure_json(s))["trees"][0]["n_leaves"] >= 1


def test_tree_structure_wrong_kind(engine1_models):
    with pytest.raises(ValueError):
        it.tree_structure(engine1_models["ebm"])


# ----------------------------------------------------------------- local contributions


def test_local_contributions_additive(engine1_selected, engine1_models):
    for kind, m in engine1_models.items():
        for i in (0, 17, 100):
            a = it.local_contribution(m, engine1_selected, i)
            p = m.predict(engine1_selected.X[i : i + 1])[0]
            tol = 1e-12 if kind == "ebm" else 1e-6
            assert abs(a.total() - p) < tol, kind


@pytest.mark.parametrize("kind", ["tree", "figs", "ebm"])
def test_local_contribution_cycle_dominant(engine1_selected, engine1_models, kind):
    a = it.local_contribution(engine1_models[kind], engine1_selected, 0)
    assert a.ranked()[0] == "cycle"


def test_local_contribution_relu_cycle_weight(engine1_selected, engine1_models):
    a = it.local_contribution(engine1_models["relu_dnn"], engine1_selected, 0)
    coefs = a.metadata["coefficients"]
    assert max(coefs, key=lambda k: abs(coefs[k])) == "cycle"


def test_tree_path_contribution_oracle():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] * 5)
    y = X[:, 0] * 2 + X[:, 1]
    ds = make_dataset(X, y, train_frac=1.0)
    m = fit_decision_tree(ds, TreeSpec(max_depth=2, min_samples_leaf=1))
    a = it.local_contribution(m, ds, 3)
    assert a.base_value == pytest.approx(1.5)
    assert a.per_feature["x0"] == pytest.approx(1.0) and a.per_feature["x1"] == pytest.approx(0.5)
