"""Command-line pipeline: ingest, select, train, explain, interpret, diagnose and report.

Each stage writes into ``<out>/<stage>/`` and records itself in
``<out>/run_manifest.json``. Settings come from flags, then the ``RULXAI_SEED``
environment variable (seed only), then a JSON ``--config`` file, then defaults.
Exit codes: 0 success, 2 input error, 3 computation failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnose as dg
from . import explain as ex
from . import feature_select as fs
from . import interpret as it
from . import svg
from .ingest import IngestError, SplitSpec, build_dataset, load_records
from .models import MODEL_KINDS, ModelError, fit_model, load_model, save_model, spec_from_dict
from .synthetic import write_phm08_like

DEFAULTS = {
    "out": "out",
    "seed": 0,
    "format": "whitespace",
    "unit": None,
    "normalize": True,
    "test_ratio": 0.2,
    "method": "pearson",
    "threshold": 0.01,
    "max_features": 15,
    "rcit_init": "none",
    "models": ",".join(MODEL_KINDS),
    "explain_methods": "pfi,pdp,ale,lime,shap",
    "sample": 0,
    "features": None,
    "grid_size": 100,
    "num_bins": 10,
    "repeats": 10,
    "num_samples": 1000,
    "top_k": 10,
    "views": "llm,parallel,terms,rules,local",
    "tests": "accuracy,residuals,overfit,reliability,robustness,resilience",
    "alpha": 0.1,
    "calib_fraction": 0.5,
    "flag_factor": 1.5,
}

SELECT_METHODS = {
    "pearson": "pearson",
    "dcor": "distance_corr",
    "distance_corr": "distance_corr",
    "gbdt": "gbdt_importance",
    "gbdt_importance": "gbdt_importance",
    "rcit": "rcit_dependence",
    "rcit_dependence": "rcit_dependence",
}

STAGES = ("ingest", "select", "train", "explain", "interpret", "diagnose")


class InputError(Exception):
    """Bad arguments, missing inputs or missing upstream artifacts (exit code 2)."""


class StageFailure(Exception):
    """Every task of a stage failed (exit code 3)."""


class Settings:
    def __init__(self, args, config):
        self.args = args
        self.config = config

    def get(self, name):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name == "seed" and os.environ.get("RULXAI_SEED"):
            try:
                return int(os.environ["RULXAI_SEED"])
            except ValueError:
                raise InputError(f"RULXAI_SEED must be an integer, got {os.environ['RULXAI_SEED']!r}") from None
        if name in self.config:
            return self.config[name]
        return DEFAULTS.get(name)

    def csv_list(self, name):
        value = self.get(name)
        if value is None:
            return []
        if isinstance(value, (list, tuple)):
            return [str(v) for v in value]
        return [v.strip() for v in str(value).split(",") if v.strip()]

    @property
    def out(self):
        return Path(self.get("out"))


def _write(path, text, outputs):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    outputs.append(path)


def _json(doc):
    return json.dumps(dg.clean_json(doc), indent=1, sort_keys=True) + "\n"


def _update_manifest(st, stage, echo, outputs, wall, fingerprint=None):
    path = st.out / "run_manifest.json"
    doc = {"tool_version": __version__, "config": {}, "stages": {}}
    if path.exists():
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError:
            pass
    doc["tool_version"] = __version__
    doc.setdefault("config", {})[stage] = echo
    rel = sorted(str(p.relative_to(st.out)) for p in outputs)
    doc.setdefault("stages", {})[stage] = {
        "outputs": rel,
        "wall_time_s": round(wall, 3),
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if fingerprint is not None:
        doc["dataset"] = fingerprint
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_config(path):
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise InputError(f"config file {path} is not valid JSON: {err}") from None
    if not isinstance(doc, dict):
        raise InputError(f"config file {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


# ---------------------------------------------------------------- dataset plumbing


def _dataset_from_source(src):
    table = load_records(src["data"], format=src["format"])
    return build_dataset(
        table,
        unit_filter=src["unit"],
        normalize=src["normalize"],
        split=SplitSpec(test_ratio=src["test_ratio"], seed=src["seed"]),
    )


def load_dataset(st):
    """Rebuild the ingested dataset and check it still matches the recorded fingerprint."""
    path = st.out / "ingest" / "dataset.json"
    if not path.exists():
        raise InputError(f"no ingested dataset at {path}; run 'rulxai ingest' first")
    doc = json.loads(path.read_text())
    try:
        ds = _dataset_from_source(doc["source"])
    except (OSError, IngestError) as err:
        raise InputError(f"cannot reload dataset: {err}") from None
    if ds.fingerprint() != doc["fingerprint"]:
        raise InputError(f"data file {doc['source']['data']} changed since ingest; rerun 'rulxai ingest'")
    return ds


def selected_features(st, ds):
    path = st.out / "select" / "selected_features.txt"
    if not path.exists():
        raise InputError(f"no feature selection at {path}; run 'rulxai select' first")
    names = [n for n in path.read_text().split() if n]
    if not names:
        raise InputError("the feature selection is empty; rerun 'rulxai select' with a lower threshold")
    return ds.select(names)


def trained_models(st, kinds):
    models = {}
    for kind in kinds:
        path = st.out / "train" / f"{kind}.json"
        if not path.exists():
            raise InputError(f"model file not found: {path}; run 'rulxai train --models {kind}' first")
        models[kind] = load_model(path)
    return models


def _kinds(st):
    kinds = st.csv_list("models")
    bad = [k for k in kinds if k not in MODEL_KINDS]
    if bad:
        raise InputError(f"unknown model kind(s) {bad}; choose from {list(MODEL_KINDS)}")
    return kinds


def _existing_kinds(st):
    """Requested kinds; by default only those with a model file present."""
    if getattr(st.args, "models", None) is None and "models" not in st.config:
        present = [k for k in MODEL_KINDS if (st.out / "train" / f"{k}.json").exists()]
        if not present:
            raise InputError(f"no trained models under {st.out / 'train'}; run 'rulxai train' first")
        return present
    return _kinds(st)


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


# ---------------------------------------------------------------- commands


def cmd_synth(st):
    target = st.get("output")
    if not target:
        raise InputError("--output is required")
    write_phm08_like(target, n_units=st.get("units") or 5, seed=int(st.get("seed")))
    print(f"wrote {target}")
    return 0


def cmd_ingest(st):
    data = st.get("data")
    if not data:
        raise InputError("--data is required")
    unit = st.get("unit")
    src = {
        "data": str(data),
        "format": st.get("format"),
        "unit": None if unit is None else int(unit),
        "normalize": bool(st.get("normalize")),
        "test_ratio": float(st.get("test_ratio")),
        "seed": int(st.get("seed")),
    }
    if not Path(data).exists():
        raise InputError(f"data file not found: {data}")
    try:
        ds = _dataset_from_source(src)
    except ValueError as err:
        raise InputError(str(err)) from None
    outputs = []
    doc = {"source": src, **ds.snapshot(), "n_rows": int(ds.X.shape[0]), "n_features": ds.n_features}
    _write(st.out / "ingest" / "dataset.json", _json(doc), outputs)
    print(f"{data}: {ds.X.shape[0]} rows, {ds.n_features} features, split {doc['n_train']}/{doc['n_test']} (seed {src['seed']})")
    return outputs, src, ds.fingerprint()


def _score_table(method, ds, st):
    seed = int(st.get("seed"))
    if method == "pearson":
        return fs.pearson_scores(ds)
    if method == "distance_corr":
        return fs.distance_correlation(ds)
    if method == "gbdt_importance":
        return fs.gbdt_importance(ds, seed=seed)
    return fs.rcit_dependence(ds, fs.RcitConfig(seed=seed, initialization=st.get("rcit_init")))


def cmd_select(st):
    ds = load_dataset(st)
    requested = st.csv_list("method")
    if requested == ["all"]:
        requested = ["pearson", "dcor", "gbdt", "rcit"]
    unknown = [m for m in requested if m not in SELECT_METHODS]
    if unknown or not requested:
        raise InputError(f"unknown selection method(s) {unknown}; choose from {sorted(SELECT_METHODS)} or 'all'")
    out = st.out / "select"
    outputs = []
    tables = []
    for name in requested:
        method = SELECT_METHODS[name]
        table = _score_table(method, ds, st)
        tables.append(table)
        _write(out / f"scores_{method}.csv", table.to_csv(), outputs)
        _write(out / f"scores_{method}.json", table.to_json() + "\n", outputs)
        _write(out / f"scores_{method}.svg", svg.bar_chart(ds.feature_names, table.scores, f"{method} scores"), outputs)
    eda = fs.eda_summary(ds)
    _write(out / "heatmap.json", _json({"labels": eda["labels"], "correlation": eda["correlation"]}), outputs)
    _write(out / "heatmap.svg", svg.heatmap(eda["labels"], eda["correlation"], "Pearson correlation"), outputs)
    if eda["cycle_rul"]:
        pts = np.array(eda["cycle_rul"])
        _write(out / "cycle_rul.svg", svg.scatter(pts[:, 0], pts[:, 1], "RUL against cycle", "cycle", "RUL"), outputs)
    threshold = float(st.get("threshold"))
    cap = st.get("max_features")
    chosen = fs.select_features(tables[0], threshold, None if cap is None else int(cap))
    _write(out / "selected_features.txt", "".join(n + "\n" for n in chosen), outputs)
    if not chosen:
        _warn(f"no feature passes |score| > {threshold}; selection is empty")
    print(f"selected {len(chosen)} feature(s) by {tables[0].method}: {', '.join(chosen)}")
    echo = {"methods": requested, "threshold": threshold, "max_features": cap, "seed": int(st.get("seed"))}
    return outputs, echo, None


METRIC_COLUMNS = ["model", "test_mse", "test_mae", "test_r2", "train_mse", "train_mae", "train_r2", "wall_time_s"]


def _model_spec(st, kind):
    spec = dict((st.config.get("model_specs") or {}).get(kind, {}))
    base = spec_from_dict(kind, spec)
    if any(f.name == "seed" for f in dataclasses.fields(base)) and "seed" not in spec:
        spec["seed"] = int(st.get("seed"))
    return spec_from_dict(kind, spec)


def cmd_train(st):
    ds = selected_features(st, load_dataset(st))
    kinds = _kinds(st)
    out = st.out / "train"
    outputs = []
    rows = []
    failures = {}
    for kind in kinds:
        try:
            spec = _model_spec(st, kind)
            t0 = time.perf_counter()
            model = fit_model(kind, ds, spec)
            wall = time.perf_counter() - t0
        except (ModelError, ValueError, FloatingPointError) as err:
            failures[kind] = str(err)
            _warn(f"{kind} failed: {err}")
            continue
        path = out / f"{kind}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_model(model, path)
        outputs.append(path)
        acc = dg.accuracy_report(model, ds)
        rows.append([kind] + [getattr(acc[s], m) for s in ("test", "train") for m in ("mse", "mae", "r2")] + [wall])
        print(f"{kind}: test R2 {acc['test'].r2:.4f}, test MSE {acc['test'].mse:.3e} ({wall:.1f}s)")
    if not rows:
        raise StageFailure(f"all models failed: {failures}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([r[0]] + [repr(float(v)) for v in r[1:-1]] + [f"{r[-1]:.3f}"])
    _write(out / "metrics.csv", buf.getvalue(), outputs)
    if failures:
        _write(out / "failures.json", _json(failures), outputs)
    echo = {"models": kinds, "features": list(ds.feature_names), "seed": int(st.get("seed"))}
    return outputs, echo, None


def _explain_features(st, ds):
    names = st.csv_list("features")
    if not names:
        names = ["cycle"] if "cycle" in ds.feature_names else [ds.feature_names[0]]
    for n in names:
        ds.feature_index(n)
    return names


def _attribution_outputs(att, stem, out, outputs, title):
    _write(out / f"{stem}.json", att.to_json() + "\n", outputs)
    _write(out / f"{stem}.csv", att.to_csv(), outputs)
    names = list(att.per_feature)
    _write(out / f"{stem}.svg", svg.bar_chart(names, [att.per_feature[n] for n in names], title), outputs)


def cmd_explain(st):
    ds = load_dataset(st)
    kinds = _existing_kinds(st)
    models = trained_models(st, kinds)
    methods = st.csv_list("explain_methods")
    bad = [m for m in methods if m not in ("pfi", "pdp", "ale", "lime", "shap")]
    if bad:
        raise InputError(f"unknown explain method(s) {bad}")
    seed = int(st.get("seed"))
    sample = int(st.get("sample"))
    outputs, errors, done = [], {}, 0
    for kind, model in models.items():
        mds = ds.select(model.feature_names)
        features = _explain_features(st, mds)
        out = st.out / "explain" / kind
        for method in methods:
            try:
                if method == "pfi":
                    t = ex.permutation_importance(model, mds, repeats=int(st.get("repeats")), seed=seed)
                    _write(out / "pfi.csv", t.to_csv(), outputs)
                    _write(out / "pfi.json", t.to_json() + "\n", outputs)
                    _write(out / "pfi.svg", svg.bar_chart(mds.feature_names, t.scores, f"{kind}: permutation importance"), outputs)
                elif method in ("pdp", "ale"):
                    for f in features:
                        if method == "pdp":
                            c = ex.partial_dependence(model, mds, f, int(st.get("grid_size")))
                        else:
                            c = ex.accumulated_local_effects(model, mds, f, int(st.get("num_bins")))
                        _write(out / f"{method}_{f}.json", c.to_json() + "\n", outputs)
                        _write(out / f"{method}_{f}.csv", c.to_csv(), outputs)
                        chart = svg.line_chart([(method, c.grid, c.values)], f"{kind}: {method.upper()} of {f}", f, method)
                        _write(out / f"{method}_{f}.svg", chart, outputs)
                elif method == "lime":
                    a = ex.lime_explain(
                        model, mds, sample, num_samples=int(st.get("num_samples")), top_k=int(st.get("top_k")), seed=seed
                    )
                    _attribution_outputs(a, f"lime_{sample}", out, outputs, f"{kind}: LIME sample {sample}")
                else:
                    a = ex.shapley_exact(model, mds, sample, seed=seed)
                    pred = float(model.predict(mds.X[sample : sample + 1])[0])
                    a.metadata["efficiency_residual"] = abs(a.total() - pred)
                    _attribution_outputs(a, f"shap_{sample}", out, outputs, f"{kind}: Shapley sample {sample}")
                done += 1
            except (ValueError, IndexError, KeyError, ModelError) as err:
                errors[f"{kind}/{method}"] = str(err)
                _warn(f"{kind}/{method}: {err}")
    if errors:
        _write(st.out / "explain" / "errors.json", _json(errors), outputs)
    if not done:
        raise StageFailure(f"every explainer failed: {errors}")
    echo = {"models": kinds, "methods": methods, "sample": sample, "seed": seed}
    return outputs, echo, None


VIEW_KINDS = {
    "llm": ("relu_dnn",),
    "parallel": ("relu_dnn",),
    "terms": ("ebm",),
    "rules": ("tree", "figs"),
    "local": MODEL_KINDS,
}


def cmd_interpret(st):
    ds = load_dataset(st)
    kinds = _existing_kinds(st)
    models = trained_models(st, kinds)
    views = st.csv_list("views")
    bad = [v for v in views if v not in VIEW_KINDS]
    if bad:
        raise InputError(f"unknown view(s) {bad}; choose from {sorted(VIEW_KINDS)}")
    sample = int(st.get("sample"))
    outputs, errors = [], {}
    for kind, model in models.items():
        mds = ds.select(model.feature_names)
        out = st.out / "interpret" / kind
        llms = None
        for view in views:
            if kind not in VIEW_KINDS[view]:
                continue
            try:
                if view in ("llm", "parallel") and llms is None:
                    llms = it.extract_llms(model, mds)
                if view == "llm":
                    _write(out / "llms.json", _json([m.to_dict(mds.feature_names) for m in llms]), outputs)
                    imp = it.llm_feature_importance(llms, mds)
                    _write(out / "llm_importance.csv", imp.to_csv(), outputs)
                    _write(out / "llm_importance.svg", svg.bar_chart(mds.feature_names, imp.scores, "LLM feature importance"), outputs)
                elif view == "parallel":
                    pv = it.llm_coefficient_views(llms, mds.feature_names)
                    _write(out / "parallel.csv", it.parallel_csv(pv), outputs)
                    _write(out / "coefficient_summary.json", _json(pv["summary"]), outputs)
                    lines = [p["coefficients"] for p in pv["polylines"]]
                    _write(out / "parallel.svg", svg.parallel_coordinates(pv["features"], lines, "LLM coefficients"), outputs)
                elif view == "terms":
                    tv = it.ebm_terms(model, mds)
                    _write(out / "terms.json", _json({"intercept": model.intercept, "terms": [v.to_dict() for v in tv]}), outputs)
                    _write(out / "term_importance.svg", svg.bar_chart([v.term for v in tv], [v.importance for v in tv], "EBM term importance"), outputs)
                    for v in tv:
                        if len(v.features) == 1 and v is tv[0]:
                            edges = v.bin_edges[0]
                            grid = np.arange(v.contributions.size)
                            _write(out / f"shape_{v.term}.svg", svg.line_chart([(v.term, grid, v.contributions)], f"EBM shape of {v.term} ({edges.size} cuts)", "bin", "contribution"), outputs)
                elif view == "rules":
                    s = it.tree_structure(model)
                    _write(out / "rules.json", it.structure_json(s) + "\n", outputs)
                    _write(out / "rules.txt", "".join(f"[tree {r.tree}] {r.text()}\n" for r in s["rules"]), outputs)
                else:
                    a = it.local_contribution(model, mds, sample)
                    _attribution_outputs(a, f"local_{sample}", out, outputs, f"{kind}: local contribution sample {sample}")
            except (ValueError, IndexError, ModelError) as err:
                errors[f"{kind}/{view}"] = str(err)
                _warn(f"{kind}/{view}: {err}")
    if errors:
        _write(st.out / "interpret" / "errors.json", _json(errors), outputs)
    if not outputs:
        raise StageFailure(f"no interpretation produced: {errors}")
    return outputs, {"models": kinds, "views": views, "sample": sample}, None


def cmd_diagnose(st):
    ds = load_dataset(st)
    kinds = _existing_kinds(st)
    models = trained_models(st, kinds)
    tests = st.csv_list("tests")
    valid = ("accuracy", "residuals", "overfit", "reliability", "robustness", "resilience")
    bad = [t for t in tests if t not in valid]
    if bad:
        raise InputError(f"unknown diagnostic test(s) {bad}; choose from {list(valid)}")
    seed = int(st.get("seed"))
    outputs, errors = [], {}
    curves = {"robustness": [], "resilience": []}
    for kind, model in models.items():
        mds = ds.select(model.feature_names)
        out = st.out / "diagnose" / kind
        report = dg.DiagnosticsReport(kind, dg.accuracy_report(model, mds))
        try:
            if "residuals" in tests:
                pairs = dg.residual_pairs(model, mds)
                report.residuals = pairs
                _write(out / "residuals.csv", dg.residual_csv(pairs), outputs)
                px = np.concatenate([pairs["train"]["prediction"], pairs["test"]["prediction"]])
                rx = np.concatenate([pairs["train"]["residual"], pairs["test"]["residual"]])
                groups = ["train"] * len(pairs["train"]["prediction"]) + ["test"] * len(pairs["test"]["prediction"])
                _write(out / "residuals.svg", svg.scatter(px, rx, f"{kind}: residuals", "prediction", "residual", groups), outputs)
            if "overfit" in tests:
                feats = st.csv_list("features") or (["cycle"] if "cycle" in mds.feature_names else [mds.feature_names[0]])
                report.overfit = dg.overfit_slices(model, mds, feats[0], int(st.get("num_bins")), float(st.get("flag_factor")))
                bins = report.overfit["bins"]
                gaps = [0.0 if b["gap"] != b["gap"] else b["gap"] for b in bins]
                chart = svg.bar_chart([f"B{b['bin'] + 1}" for b in bins], gaps, f"{kind}: test - train MSE by {feats[0]} bin")
                _write(out / "overfit.svg", chart, outputs)
            if "reliability" in tests:
                band = dg.conformal_reliability(model, mds, float(st.get("alpha")), float(st.get("calib_fraction")), seed)
                report.reliability = band
                labels = [f"D{s['decile']}" for s in band.segmented]
                _write(out / "reliability.svg", svg.bar_chart(labels, [s["bandwidth"] for s in band.segmented], f"{kind}: segmented bandwidth"), outputs)
            if "robustness" in tests:
                report.robustness = dg.robustness_curve(model, mds, repeats=int(st.get("repeats")), seed=seed)
                curves["robustness"].append((kind, report.robustness.grid, report.robustness.values))
                _write(out / "robustness.csv", report.robustness.to_csv(), outputs)
            if "resilience" in tests:
                report.resilience, report.shift = dg.resilience_curve(model, mds)
                curves["resilience"].append((kind, report.resilience.grid, report.resilience.values))
                _write(out / "resilience.csv", report.resilience.to_csv(), outputs)
        except (ValueError, ModelError) as err:
            errors[kind] = str(err)
            _warn(f"{kind}: {err}")
        _write(out / "report.json", report.to_json() + "\n", outputs)
    for name, series in curves.items():
        if series:
            xl = "noise level" if name == "robustness" else "worst-sample ratio"
            _write(st.out / "diagnose" / f"{name}.svg", svg.line_chart(series, f"{name} (test MSE)", xl, "MSE"), outputs)
    if errors:
        _write(st.out / "diagnose" / "errors.json", _json(errors), outputs)
        if len(errors) == len(models):
            raise StageFailure(f"diagnostics failed for every model: {errors}")
    return outputs, {"models": kinds, "tests": tests, "alpha": float(st.get("alpha")), "seed": seed}, None


# ---------------------------------------------------------------- report

SECTIONS = (
    ("Data", "ingest"),
    ("Feature selection", "select"),
    ("Models", "train"),
    ("Explanations", "explain"),
    ("Interpretability", "interpret"),
    ("Diagnostics", "diagnose"),
)


def _links(root, stage):
    files = sorted(p for p in (root / stage).rglob("*") if p.is_file())
    return [f"- [{p.relative_to(root)}]({p.relative_to(root)})" for p in files]


def _section_body(root, stage):
    lines = []
    d = root / stage
    if stage == "ingest":
        doc = json.loads((d / "dataset.json").read_text())
        lines.append(f"Rows: {doc['n_rows']}, features: {doc['n_features']}, train/test: {doc['n_train']}/{doc['n_test']}, seed {doc['seed']}.")
    elif stage == "select" and (d / "selected_features.txt").exists():
        names = (d / "selected_features.txt").read_text().split()
        lines.append(f"Selected features ({len(names)}): {', '.join(names) if names else '(none)'}.")
    elif stage == "train" and (d / "metrics.csv").exists():
        rows = list(csv.reader((d / "metrics.csv").read_text().splitlines()))
        head = rows[0][:-1]
        lines.append("| " + " | ".join(head) + " |")
        lines.append("|" + "---|" * len(head))
        for r in rows[1:]:
            lines.append("| " + " | ".join([r[0]] + [f"{float(v):.4g}" for v in r[1:-1]]) + " |")
    elif stage == "explain":
        for pf in sorted(d.glob("*/pfi.json")):
            doc = json.loads(pf.read_text())
            top = max(doc["features"], key=lambda f: f["score"])
            lines.append(f"- {pf.parent.name}: largest permutation importance {top['name']} ({top['score']:.4g})")
    elif stage == "interpret":
        for sub in sorted(p for p in d.iterdir() if p.is_dir()):
            n = len(list(sub.iterdir()))
            extra = ""
            if (sub / "llms.json").exists():
                extra = f", {len(json.loads((sub / 'llms.json').read_text()))} local linear models"
            elif (sub / "terms.json").exists():
                extra = f", top term {json.loads((sub / 'terms.json').read_text())['terms'][0]['term']}"
            lines.append(f"- {sub.name}: {n} artifact(s){extra}")
    elif stage == "diagnose":
        for rp in sorted(d.glob("*/report.json")):
            rep = json.loads(rp.read_text())
            parts = [f"test MSE {rep['accuracy']['test']['mse']:.4g}"]
            if "reliability" in rep:
                rel = rep["reliability"]
                parts.append(f"conformal coverage {rel['coverage']:.3f} at alpha {rel['alpha']}, band width {rel['avg_bandwidth']:.4g}")
            lines.append(f"- {rep['model']}: " + "; ".join(parts))
    return lines


def cmd_report(st):
    root = st.out
    manifest_path = root / "run_manifest.json"
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    lines = ["# RUL pipeline report", ""]
    for k, (title, stage) in enumerate(SECTIONS, 1):
        lines += [f"## {k}. {title}", ""]
        if not (root / stage).is_dir():
            lines += ["_not run_", ""]
            continue
        lines += _section_body(root, stage)
        lines += [""] + _links(root, stage) + [""]
    lines += ["## Run manifest", ""]
    if manifest:
        stable = {
            "tool_version": manifest.get("tool_version"),
            "config": manifest.get("config", {}),
            "dataset": manifest.get("dataset"),
            "outputs": {s: v.get("outputs", []) for s, v in manifest.get("stages", {}).items()},
        }
        lines += ["Stage timings and timestamps: [run_manifest.json](run_manifest.json).", "", "```json"]
        lines += json.dumps(stable, indent=1, sort_keys=True).splitlines() + ["```", ""]
    else:
        lines += ["_not run_", ""]
    root.mkdir(parents=True, exist_ok=True)
    (root / "report.md").write_text("\n".join(lines))
    print(f"wrote {root / 'report.md'}")
    return 0


# ---------------------------------------------------------------- argument parsing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings; flags take precedence")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="global seed (default 0; env RULXAI_SEED)")

    p = argparse.ArgumentParser(prog="rulxai", description="Interpretable RUL modelling pipeline")
    p.add_argument("--version", action="version", version=f"rulxai {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic PHM08-like training file")
    s.add_argument("--output")
    s.add_argument("--units", type=int)

    s = sub.add_parser("ingest", parents=[common], help="load, split and normalise the trajectory file")
    s.add_argument("--data")
    s.add_argument("--format", choices=("whitespace", "csv"))
    s.add_argument("--unit", type=int)
    s.add_argument("--no-normalize", dest="normalize", action="store_const", const=False)
    s.add_argument("--test-ratio", type=float)

    s = sub.add_parser("select", parents=[common], help="score features against RUL and select")
    s.add_argument("--method", help="comma list of pearson, dcor, gbdt, rcit, or 'all'")
    s.add_argument("--threshold", type=float)
    s.add_argument("--max-features", type=int)
    s.add_argument("--rcit-init", choices=("none", "feature_importance"))

    s = sub.add_parser("train", parents=[common], help="fit the models on the selected features")
    s.add_argument("--models", help="comma list of " + ", ".join(MODEL_KINDS))

    s = sub.add_parser("explain", parents=[common], help="model-agnostic explanations")
    s.add_argument("--models", "--model", dest="models")
    s.add_argument("--method", dest="explain_methods", help="comma list of pfi, pdp, ale, lime, shap")
    s.add_argument("--sample", type=int)
    s.add_argument("--features")
    s.add_argument("--grid-size", type=int)
    s.add_argument("--num-bins", type=int)
    s.add_argument("--repeats", type=int)
    s.add_argument("--num-samples", type=int)
    s.add_argument("--top-k", type=int)

    s = sub.add_parser("interpret", parents=[common], help="intrinsic interpretation")
    s.add_argument("--models", "--model", dest="models")
    s.add_argument("--view", dest="views", help="comma list of llm, parallel, terms, rules, local")
    s.add_argument("--sample", type=int)

    s = sub.add_parser("diagnose", parents=[common], help="accuracy, reliability, robustness and resilience")
    s.add_argument("--models", "--model", dest="models")
    s.add_argument("--test", dest="tests", help="comma list of accuracy, residuals, overfit, reliability, robustness, resilience")
    s.add_argument("--alpha", type=float)
    s.add_argument("--calib-fraction", type=float)
    s.add_argument("--repeats", type=int)
    s.add_argument("--features")
    s.add_argument("--num-bins", type=int)
    s.add_argument("--flag-factor", type=float)

    sub.add_parser("report", parents=[common], help="assemble out/report.md")
    return p


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "select": cmd_select,
    "train": cmd_train,
    "explain": cmd_explain,
    "interpret": cmd_interpret,
    "diagnose": cmd_diagnose,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        st = Settings(args, load_config(args.config))
        t0 = time.perf_counter()
        result = COMMANDS[args.command](st)
        if isinstance(result, tuple):
            outputs, echo, fingerprint = result
            _update_manifest(st, args.command, echo, outputs, time.perf_counter() - t0, fingerprint)
        return 0
    except (InputError, IngestError, FileNotFoundError, KeyError) as err:
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except (StageFailure, ModelError, ValueError, FloatingPointError, np.linalg.LinAlgError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
