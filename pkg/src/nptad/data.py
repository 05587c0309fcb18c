"""Tabular datasets: CSV ingestion, the one-class split, and the synthetic contamination generator."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import ContractError, DataLoadError, SchemaError
from .numerics import make_rng

NUMERICAL = "numerical"
CATEGORICAL = "categorical"


@dataclass
class TabularDataset:
    """Feature matrix plus binary labels (1 = anomaly).

    ``X`` is float64 when every column is numerical; with categorical columns
    it is an object array holding the raw category strings.
    """

    name: str
    X: np.ndarray
    labels: np.ndarray
    columns: list[str]
    kinds: list[str]
    categories: list = field(default_factory=list)
    provenance: str = ""

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(self.columns):
            raise ContractError("feature matrix does not match column list")
        if len(self.labels) != len(self.X):
            raise ContractError("label count does not match row count")
        if not np.isin(self.labels, (0, 1)).all():
            raise ContractError("labels must be 0 or 1")
        if not self.categories:
            self.categories = [None] * len(self.columns)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def categorical_features(self) -> list[int]:
        return [j for j, k in enumerate(self.kinds) if k == CATEGORICAL]

    def cardinality(self, j: int) -> int:
        return 1 if self.kinds[j] == NUMERICAL else len(self.categories[j])

    def subset(self, idx, name: str | None = None) -> "TabularDataset":
        idx = np.asarray(idx, dtype=int)
        return replace(self, name=name or self.name, X=self.X[idx], labels=self.labels[idx])


def read_schema_sidecar(path) -> dict:
    """JSON file with optional keys ``categorical`` (list of column names) and ``label_col``."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise DataLoadError(f"cannot read schema file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError("schema file must hold a JSON object")
    return data


def load_csv(path, label_col: str = "label", categorical=(), name: str | None = None) -> TabularDataset:
    """Read a UTF-8, comma-separated file with a header row.

    Columns listed in ``categorical`` keep their raw string values; every other
    non-label column must parse as a float. Empty cells are a load error.
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataLoadError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataLoadError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if label_col not in header:
        raise SchemaError(f"label column {label_col!r} not found in {path}")
    unknown = [c for c in categorical if c not in header]
    if unknown:
        raise SchemaError(f"unknown categorical column(s) {unknown} in {path}")
    label_at = header.index(label_col)
    feat_at = [i for i in range(len(header)) if i != label_at]
    columns = [header[i] for i in feat_at]
    kinds = [CATEGORICAL if c in categorical else NUMERICAL for c in columns]

    body = rows[1:]
    X = np.empty((len(body), len(columns)), dtype=object if CATEGORICAL in kinds else np.float64)
    labels = np.empty(len(body), dtype=int)
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataLoadError(f"row {r} (line {r + 1}): expected {len(header)} fields, got {len(row)}")
        for out_j, src in enumerate(feat_at):
            cell = row[src].strip()
            if cell == "":
                raise DataLoadError(f"row {r} (line {r + 1}), column {columns[out_j]!r}: missing value")
            if kinds[out_j] == CATEGORICAL:
                X[r - 1, out_j] = cell
            else:
                X[r - 1, out_j] = _parse_float(cell, r, columns[out_j])
        lab = _parse_float(row[label_at].strip(), r, label_col)
        if lab not in (0.0, 1.0):
            raise DataLoadError(f"row {r} (line {r + 1}): label must be 0 or 1, got {row[label_at]!r}")
        labels[r - 1] = int(lab)
    categories = [sorted(set(X[:, j])) if k == CATEGORICAL else None for j, k in enumerate(kinds)]
    return TabularDataset(name or path.stem, X, labels, columns, kinds, categories, f"csv:{path}")


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataLoadError(f"row {row} (line {row + 1}), column {col!r}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(value):
        raise DataLoadError(f"row {row} (line {row + 1}), column {col!r}: non-finite value {cell!r}")
    return value


def write_csv(path, ds: TabularDataset, label_col: str = "label"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ds.columns + [label_col])
        for x, y in zip(ds.X, ds.labels):
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in x] + [int(y)])


@dataclass
class SplitSpec:
    seed: int = 0
    train_fraction_of_normals: float = 0.5


def split(ds: TabularDataset, spec: SplitSpec | None = None):
    """Train on a random half of the normals; validate on the rest plus every anomaly.

    Returns ``(train, val, train_idx, val_idx)``; indices refer to rows of ``ds``
    and both index arrays are sorted.
    """
    spec = spec or SplitSpec()
    normals = np.flatnonzero(ds.labels == 0)
    anomalies = np.flatnonzero(ds.labels == 1)
    if len(normals) < 2 or len(anomalies) < 1:
        raise ContractError(f"need >= 2 normals and >= 1 anomaly, got {len(normals)} and {len(anomalies)}")
    n_train = int(math.floor(spec.train_fraction_of_normals * len(normals)))
    chosen = make_rng(spec.seed).permutation(len(normals))[:n_train]
    train_idx = np.sort(normals[chosen])
    val_idx = np.sort(np.setdiff1d(np.arange(ds.n), train_idx))
    return ds.subset(train_idx, f"{ds.name}-train"), ds.subset(val_idx, f"{ds.name}-val"), train_idx, val_idx


# ------------------------------------------------------------------ synthetic
SYNTH_DIM = 4
SYNTH_ANOMALY_MEAN = 8.0
SYNTH_TRAIN_NORMALS = 900
SYNTH_VAL_NORMALS = 450
SYNTH_VAL_ANOMALIES = 50
CONTAMINATION_SHARES = tuple(round(0.01 * i, 2) for i in range(11))


def contamination_count(share: float, n_normals: int = SYNTH_TRAIN_NORMALS) -> int:
    """Anomalies to add so they make up ``share`` of the training set (rounded up)."""
    return int(math.ceil(round(n_normals * share / (1.0 - share), 9)))


def gen_synthetic(contamination_share: float, seed: int = 0):
    """Two separable 4-D Gaussians: normals at the origin, anomalies at (8, 8, 8, 8).

    The validation set is fixed for a given seed (450 normals, 50 anomalies);
    the training set holds 900 normals plus enough anomalies to reach the
    requested contamination share.
    """
    share = round(float(contamination_share), 10)
    if not 0.0 <= share <= 0.10 + 1e-12 or abs(share * 100 - round(share * 100)) > 1e-9:
        raise ContractError(f"contamination share must be one of 0.00, 0.01, ..., 0.10; got {contamination_share}")
    rng = make_rng(seed)
    n_contam = contamination_count(share)
    val_normal = rng.normal(size=(SYNTH_VAL_NORMALS, SYNTH_DIM))
    val_anom = rng.normal(size=(SYNTH_VAL_ANOMALIES, SYNTH_DIM)) + SYNTH_ANOMALY_MEAN
    train_normal = rng.normal(size=(SYNTH_TRAIN_NORMALS, SYNTH_DIM))
    # anomaly pool is drawn in full so smaller shares use a prefix of the same rows
    pool = rng.normal(size=(contamination_count(0.10), SYNTH_DIM)) + SYNTH_ANOMALY_MEAN
    cols = [f"x{i}" for i in range(SYNTH_DIM)]
    kinds = [NUMERICAL] * SYNTH_DIM
    train = TabularDataset(
        f"synthetic-{share:.2f}-train", np.vstack([train_normal, pool[:n_contam]]),
        np.r_[np.zeros(SYNTH_TRAIN_NORMALS, int), np.ones(n_contam, int)], cols, kinds,
        provenance=f"synthetic:share={share:.2f}:seed={seed}")
    val = TabularDataset(
        f"synthetic-{share:.2f}-val", np.vstack([val_normal, val_anom]),
        np.r_[np.zeros(SYNTH_VAL_NORMALS, int), np.ones(SYNTH_VAL_ANOMALIES, int)], cols, kinds,
        provenance=f"synthetic:share={share:.2f}:seed={seed}")
    return train, val
