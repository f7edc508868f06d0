"""Loading PHM08-style trajectory logs and turning them into a regression dataset."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SETTING_COLUMNS = [f"setting{i}" for i in range(1, 4)]
SENSOR_COLUMNS = [f"s{i}" for i in range(1, 22)]
RAW_COLUMNS = ["unit", "cycle", *SETTING_COLUMNS, *SENSOR_COLUMNS]
FEATURE_COLUMNS = ["cycle", *SETTING_COLUMNS, *SENSOR_COLUMNS]


class IngestError(ValueError):
    """Raised for unreadable or malformed input files."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


@dataclass(frozen=True)
class RawRecordTable:
    """Validated 26-column trajectory matrix, optionally with a derived RUL column."""

    values: np.ndarray
    rul: np.ndarray | None = None

    @property
    def columns(self):
        return list(RAW_COLUMNS)

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def unit(self):
        return self.values[:, 0].astype(np.int64)

    @property
    def cycle(self):
        return self.values[:, 1].astype(np.int64)

    def column(self, name):
        return self.values[:, RAW_COLUMNS.index(name)]

    def units(self):
        return sorted(set(self.unit.tolist()))


@dataclass(frozen=True)
class SplitSpec:
    test_ratio: float = 0.2
    seed: int = 0


@dataclass(frozen=True)
class TabularDataset:
    feature_names: list
    X: np.ndarray
    y: np.ndarray
    unit_ids: np.ndarray
    train_mask: np.ndarray
    test_mask: np.ndarray
    scaler: dict | None = None
    target_scaler: tuple | None = None
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return len(self.feature_names)

    @property
    def X_train(self):
        return self.X[self.train_mask]

    @property
    def y_train(self):
        return self.y[self.train_mask]

    @property
    def X_test(self):
        return self.X[self.test_mask]

    @property
    def y_test(self):
        return self.y[self.test_mask]

    def feature_index(self, name):
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None

    def select(self, names):
        """Dataset restricted to the given feature columns (order as given)."""
        idx = [self.feature_index(n) for n in names]
        scaler = None
        if self.scaler is not None:
            scaler = {n: self.scaler[n] for n in names}
        return TabularDataset(
            feature_names=list(names),
            X=self.X[:, idx].copy(),
            y=self.y,
            unit_ids=self.unit_ids,
            train_mask=self.train_mask,
            test_mask=self.test_mask,
            scaler=scaler,
            target_scaler=self.target_scaler,
            seed=self.seed,
            metadata=dict(self.metadata),
        )

    def snapshot(self):
        """JSON-ready reproducibility record."""
        return {
            "feature_names": list(self.feature_names),
            "scaler": None if self.scaler is None else {k: list(v) for k, v in self.scaler.items()},
            "target_scaler": None if self.target_scaler is None else list(self.target_scaler),
            "n_train": int(self.train_mask.sum()),
            "n_test": int(self.test_mask.sum()),
            "seed": int(self.seed),
            "fingerprint": self.fingerprint(),
        }

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(json.dumps(self.feature_names).encode())
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        h.update(np.ascontiguousarray(self.train_mask).tobytes())
        return {"rows": int(self.X.shape[0]), "sha256": h.hexdigest()}


def _parse_float(token, lineno, path):
    try:
        value = float(token)
    except ValueError:
        raise IngestError(f"non-numeric field {token!r}", line=lineno, path=path) from None
    if not math.isfinite(value):
        raise IngestError(f"non-finite field {token!r}", line=lineno, path=path)
    return value


def _read_whitespace(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != len(RAW_COLUMNS):
                raise IngestError(
                    f"expected {len(RAW_COLUMNS)} fields, found {len(tokens)}", line=lineno, path=path
                )
            rows.append([_parse_float(t, lineno, path) for t in tokens])
    return rows


def _read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for lineno, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if header is None:
                header = [c.strip() for c in record]
                missing = [c for c in RAW_COLUMNS if c not in header]
                if missing:
                    raise IngestError(f"CSV header lacks columns {missing}", line=lineno, path=path)
                order = [header.index(c) for c in RAW_COLUMNS]
                continue
            if len(record) != len(header):
                raise IngestError(
                    f"expected {len(header)} fields, found {len(record)}", line=lineno, path=path
                )
            rows.append([_parse_float(record[i].strip(), lineno, path) for i in order])
    return rows


def load_records(path, format="whitespace"):
    """Read a PHM08 trajectory file.

    ``format`` is ``"whitespace"`` (native layout, no header) or ``"csv"``
    (header row naming ``unit,cycle,setting1..3,s1..s21`` in any order).
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError("file not found", path=path)
    if format == "whitespace":
        rows = _read_whitespace(path)
    elif format == "csv":
        rows = _read_csv(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    if not rows:
        raise IngestError("file contains no records", path=path)
    values = np.asarray(rows, dtype=np.float64)
    _validate(values, path)
    return RawRecordTable(values=values)


def _validate(values, path=None):
    unit, cycle = values[:, 0], values[:, 1]
    for col, name in ((unit, "unit"), (cycle, "cycle")):
        bad = np.flatnonzero((col != np.round(col)) | (col < 1))
        if bad.size:
            raise IngestError(f"{name} must be a positive integer", line=int(bad[0]) + 1, path=path)
    last = {}
    for i, (u, c) in enumerate(zip(unit.astype(np.int64), cycle.astype(np.int64))):
        if u in last and c <= last[u]:
            raise IngestError(f"cycles of unit {u} are not strictly increasing", line=i + 1, path=path)
        last[u] = c


def derive_rul(table):
    """Append RUL = (last observed cycle of the unit) - cycle."""
    unit, cycle = table.unit, table.cycle
    rul = np.empty(table.n_rows, dtype=np.float64)
    for u in np.unique(unit):
        rows = unit == u
        rul[rows] = cycle[rows].max() - cycle[rows]
    return RawRecordTable(values=table.values, rul=rul)


def split_masks(n, split):
    if not 0.0 < split.test_ratio < 1.0:
        raise ValueError(f"test_ratio must lie in (0, 1), got {split.test_ratio}")
    n_train = int(math.floor((1.0 - split.test_ratio) * n))
    order = np.random.default_rng(split.seed).permutation(n)
    train = np.zeros(n, dtype=bool)
    train[order[:n_train]] = True
    return train, ~train


def _minmax(col):
    lo, hi = float(col.min()), float(col.max())
    return lo, hi


def _apply_minmax(col, lo, hi):
    if hi > lo:
        return (col - lo) / (hi - lo)
    return np.zeros_like(col)


def build_dataset(table, unit_filter=None, normalize=True, split=SplitSpec()):
    """Feature matrix (cycle, settings, sensors) with RUL target and a seeded random split.

    Min-max statistics come from the training rows only; test rows may land
    outside [0, 1]. The target is divided by the largest training RUL.
    """
    if table.rul is None:
        table = derive_rul(table)
    rows = np.ones(table.n_rows, dtype=bool)
    if unit_filter is not None:
        rows = table.unit == int(unit_filter)
        if not rows.any():
            raise IngestError(f"unit {unit_filter} not found")
    raw = table.values[rows]
    X = raw[:, 1:].copy()
    y = table.rul[rows].copy()
    train, test = split_masks(X.shape[0], split)
    scaler = target_scaler = None
    if normalize:
        scaler = {}
        for j, name in enumerate(FEATURE_COLUMNS):
            lo, hi = _minmax(X[train, j])
            scaler[name] = (lo, hi)
            X[:, j] = _apply_minmax(X[:, j], lo, hi)
        # RUL floor is 0; anchoring there keeps test targets non-negative
        target_scaler = (0.0, float(y[train].max()))
        y = _apply_minmax(y, *target_scaler)
    return TabularDataset(
        feature_names=list(FEATURE_COLUMNS),
        X=X,
        y=y,
        unit_ids=raw[:, 0].astype(np.int64),
        train_mask=train,
        test_mask=test,
        scaler=scaler,
        target_scaler=target_scaler,
        seed=split.seed,
        metadata={"unit_filter": unit_filter, "normalize": bool(normalize), "test_ratio": split.test_ratio},
    )


def write_records(path, values):
    """Write a raw 26-column matrix in the native whitespace layout."""
    with open(path, "w") as fh:
        for row in values:
            head = f"{int(row[0])} {int(row[1])}"
            fh.write(head + " " + " ".join(repr(float(v)) for v in row[2:]) + "\n")
