"""Loading, feature engineering, splitting and scaling of the credit-default table.

The input is the UCI "default of credit card clients" data exported to CSV
(the upstream file is XLS; convert it first).  Rows are card holders, the
label is whether they defaulted the following month.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

PAY_STATUS = ["PAY_0", "PAY_2", "PAY_3", "PAY_4", "PAY_5", "PAY_6"]
BILL_AMTS = [f"BILL_AMT{k}" for k in range(1, 7)]
PAY_AMTS = [f"PAY_AMT{k}" for k in range(1, 7)]
UTILS = [f"UTIL{k}" for k in range(1, 7)]
CATEGORICAL = ["SEX", "EDUCATION", "MARRIAGE"]
STATIC = ["LIMIT_BAL", "SEX", "EDUCATION", "MARRIAGE", "AGE"]
DYNAMIC = PAY_STATUS + BILL_AMTS + PAY_AMTS + UTILS

LABEL_COLUMN = "default payment next month"
# the widely mirrored Kaggle copy of the same table renames the label
LABEL_ALIASES = (LABEL_COLUMN, "default.payment.next.month")
UCI_HEADER = ["ID"] + STATIC + PAY_STATUS + BILL_AMTS + PAY_AMTS


class SchemaError(ValueError):
    pass


class FeatureSetKind(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"
    ALL = "all"


@dataclass(frozen=True)
class Column:
    name: str
    group: str  # "static" | "dynamic"
    kind: str  # "categorical" | "continuous" | "onehot"


def _column_info(name: str) -> Column:
    group = "static" if name in STATIC else "dynamic"
    kind = "categorical" if name in CATEGORICAL else "continuous"
    return Column(name, group, kind)


@dataclass(frozen=True)
class RawDataset:
    """Raw columns keyed by name (insertion order is file order) plus labels."""

    columns: dict
    labels: np.ndarray

    def __post_init__(self):
        n = self.labels.shape[0]
        if n == 0:
            raise ValueError("dataset has no rows")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be 0 or 1")
        for name, values in self.columns.items():
            if values.shape != (n,):
                raise ValueError(f"column {name} has {values.shape[0]} rows, expected {n}")

    @property
    def n_rows(self) -> int:
        return int(self.labels.shape[0])

    @property
    def has_utilization(self) -> bool:
        return all(u in self.columns for u in UTILS)


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    columns: tuple

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def rows(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.values[idx], self.columns)


def load_credit_csv(path) -> RawDataset:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if len(header) != len(UCI_HEADER) + 1 or header[:-1] != UCI_HEADER or header[-1] not in LABEL_ALIASES:
            raise SchemaError(f"{path}: header does not match the UCI credit-default schema: {header}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {line_no} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                bad = next(h for h, v in zip(header, row) if not _is_number(v))
                raise ValueError(f"{path}: row {line_no}: non-numeric value in column {bad}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    table = np.asarray(rows)
    columns = {name: table[:, j] for j, name in enumerate(header[:-1]) if name != "ID"}
    return RawDataset(columns, table[:, -1].astype(int))


def _is_number(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True


def derive_utilization_features(ds: RawDataset) -> RawDataset:
    """Add UTIL1..UTIL6 = BILL_AMTk / LIMIT_BAL."""
    if any(u in ds.columns for u in UTILS):
        raise ValueError("utilization features already derived")
    limit = ds.columns["LIMIT_BAL"]
    bad = np.flatnonzero(limit <= 0)
    if bad.size:
        raise ValueError(f"LIMIT_BAL must be positive; row {bad[0]} has {limit[bad[0]]}")
    columns = dict(ds.columns)
    for bill, util in zip(BILL_AMTS, UTILS):
        columns[util] = ds.columns[bill] / limit
    return RawDataset(columns, ds.labels)


def feature_names(kind: FeatureSetKind) -> list[str]:
    kind = FeatureSetKind(kind)
    if kind is FeatureSetKind.STATIC:
        return list(STATIC)
    if kind is FeatureSetKind.DYNAMIC:
        return list(DYNAMIC)
    return STATIC + DYNAMIC


def select_feature_set(ds: RawDataset, kind: FeatureSetKind) -> FeatureMatrix:
    """Raw (not yet encoded) columns of one feature set, in a fixed order."""
    kind = FeatureSetKind(kind)
    if kind is not FeatureSetKind.STATIC and not ds.has_utilization:
        raise ValueError(f"feature set {kind.value!r} needs derive_utilization_features first")
    names = feature_names(kind)
    values = np.column_stack([ds.columns[n] for n in names])
    return FeatureMatrix(values, tuple(_column_info(n) for n in names))


@dataclass(frozen=True)
class OneHotEncoder:
    """Level lists per categorical column, learned from training rows.

    Unseen levels encode to all zeros.
    """

    source: tuple
    levels: dict

    def transform(self, fm: FeatureMatrix) -> FeatureMatrix:
        if tuple(fm.columns) != self.source:
            raise ValueError("column layout differs from the one the encoder was fit on")
        blocks, cols = [], []
        for j, col in enumerate(fm.columns):
            if col.kind == "categorical":
                lv = np.asarray(self.levels[col.name], dtype=float)
                blocks.append((fm.values[:, [j]] == lv[None, :]).astype(float))
                cols.extend(Column(f"{col.name}={_level_str(v)}", col.group, "onehot") for v in lv)
            else:
                blocks.append(fm.values[:, [j]])
                cols.append(col)
        values = np.hstack(blocks) if blocks else np.empty((fm.values.shape[0], 0))
        return FeatureMatrix(values, tuple(cols))


def _level_str(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def fit_one_hot(fm: FeatureMatrix, train_rows) -> OneHotEncoder:
    levels = {}
    for j, col in enumerate(fm.columns):
        if col.kind == "categorical":
            levels[col.name] = [float(v) for v in np.unique(fm.values[train_rows, j])]
    return OneHotEncoder(tuple(fm.columns), levels)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int


def _largest_remainder(total: int, weights) -> np.ndarray:
    exact = np.asarray(weights, dtype=float) * total / np.sum(weights)
    counts = np.floor(exact).astype(int)
    short = total - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def stratified_split(n: int, labels, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> SplitIndices:
    """Shuffled train/validation/test split preserving the positive rate.

    Split sizes are the largest-remainder rounding of ``fractions * n``;
    each split's positive count is the rounding of ``prevalence * size``.
    Classes are shuffled independently with one seeded generator.
    """
    y = np.asarray(labels).ravel()
    if y.shape[0] != n:
        raise ValueError(f"{y.shape[0]} labels for {n} rows")
    fractions = np.asarray(fractions, dtype=float)
    if fractions.shape != (3,) or np.any(fractions <= 0) or not np.isclose(fractions.sum(), 1.0):
        raise ValueError("fractions must be three positive numbers summing to 1")
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if pos.size + neg.size != n:
        raise ValueError("labels must be 0 or 1")
    for name, idx in (("positive", pos), ("negative", neg)):
        if idx.size < len(fractions):
            raise ValueError(f"{name} class has {idx.size} rows, fewer than the {len(fractions)} splits")

    sizes = _largest_remainder(n, fractions)
    n_pos = _largest_remainder(pos.size, sizes)
    n_neg = sizes - n_pos

    rng = np.random.default_rng(seed)
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    cut_p = np.cumsum(n_pos)[:-1]
    cut_n = np.cumsum(n_neg)[:-1]
    parts = [
        np.sort(np.concatenate([p, q]))
        for p, q in zip(np.split(pos, cut_p), np.split(neg, cut_n))
    ]
    return SplitIndices(parts[0], parts[1], parts[2], seed)


@dataclass(frozen=True)
class Standardizer:
    """Per-column centering and scaling learned on training rows.

    Only continuous columns are scaled (population standard deviation);
    one-hot and zero-variance columns pass through.
    """

    columns: tuple
    mean: np.ndarray
    std: np.ndarray
    scaled: np.ndarray  # bool mask

    def _check(self, fm: FeatureMatrix):
        if tuple(fm.columns) != self.columns:
            raise ValueError("column layout differs from the one the standardizer was fit on")

    def apply(self, fm: FeatureMatrix) -> FeatureMatrix:
        self._check(fm)
        out = fm.values.astype(float, copy=True)
        out[:, self.scaled] = (out[:, self.scaled] - self.mean[self.scaled]) / self.std[self.scaled]
        return FeatureMatrix(out, fm.columns)

    def invert(self, fm: FeatureMatrix) -> FeatureMatrix:
        self._check(fm)
        out = fm.values.astype(float, copy=True)
        out[:, self.scaled] = out[:, self.scaled] * self.std[self.scaled] + self.mean[self.scaled]
        return FeatureMatrix(out, fm.columns)

    @property
    def passthrough(self) -> list[str]:
        return [c.name for c, s in zip(self.columns, self.scaled) if c.kind == "continuous" and not s]


def fit_standardizer(fm: FeatureMatrix) -> Standardizer:
    if fm.values.shape[0] < 2:
        raise ValueError("need at least two training rows to standardize")
    continuous = np.array([c.kind == "continuous" for c in fm.columns], dtype=bool)
    mean = fm.values.mean(axis=0)
    std = fm.values.std(axis=0)
    mean[~continuous] = 0.0
    std[~continuous] = 1.0
    constant = continuous & (std == 0)
    if constant.any():
        names = [c.name for c, z in zip(fm.columns, constant) if z]
        warnings.warn(f"zero-variance columns left unscaled: {names}", stacklevel=2)
    std[constant] = 1.0
    mean[constant] = 0.0
    return Standardizer(tuple(fm.columns), mean, std, continuous & ~constant)


apply_standardizer = Standardizer.apply


@dataclass(frozen=True)
class PreparedData:
    """Encoded, standardized train/validation/test matrices with their provenance."""

    features: FeatureSetKind
    columns: tuple
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    split: SplitIndices
    encoder: OneHotEncoder
    standardizer: Standardizer

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.y_train.size, self.y_val.size, self.y_test.size)


def prepare(ds: RawDataset, features=FeatureSetKind.ALL, seed: int = 0,
            fractions=(0.6, 0.2, 0.2)) -> PreparedData:
    """Split, one-hot encode and standardize, fitting everything on train rows."""
    features = FeatureSetKind(features)
    if features is not FeatureSetKind.STATIC and not ds.has_utilization:
        ds = derive_utilization_features(ds)
    raw = select_feature_set(ds, features)
    split = stratified_split(ds.n_rows, ds.labels, fractions, seed)
    encoder = fit_one_hot(raw, split.train)
    encoded = encoder.transform(raw)
    scaler = fit_standardizer(encoded.rows(split.train))
    x = scaler.apply(encoded).values
    y = ds.labels
    return PreparedData(
        features, encoded.columns,
        x[split.train], y[split.train],
        x[split.validation], y[split.validation],
        x[split.test], y[split.test],
        split, encoder, scaler,
    )


SPLIT_NAMES = ("train", "val", "test")


def save_prepared(prep: PreparedData, outdir) -> None:
    """Write ``train.csv``, ``val.csv``, ``test.csv`` and the ``prepared.json`` sidecar."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = [c.name for c in prep.columns]
    parts = zip(
        SPLIT_NAMES,
        (prep.split.train, prep.split.validation, prep.split.test),
        (prep.x_train, prep.x_val, prep.x_test),
        (prep.y_train, prep.y_val, prep.y_test),
    )
    for name, rows, x, y in parts:
        with open(outdir / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row_id"] + names + ["label"])
            for rid, xi, yi in zip(rows, x, y):
                w.writerow([int(rid)] + [repr(float(v)) for v in xi] + [int(yi)])
    sidecar = {
        "features": prep.features.value,
        "seed": prep.split.seed,
        "columns": [{"name": c.name, "group": c.group, "kind": c.kind} for c in prep.columns],
        "encoder": {
            "source": [{"name": c.name, "group": c.group, "kind": c.kind} for c in prep.encoder.source],
            "levels": prep.encoder.levels,
        },
        "standardizer": {
            "mean": prep.standardizer.mean.tolist(),
            "std": prep.standardizer.std.tolist(),
            "scaled": prep.standardizer.scaled.tolist(),
        },
        "sizes": dict(zip(SPLIT_NAMES, prep.sizes)),
    }
    (outdir / "prepared.json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_prepared(outdir) -> PreparedData:
    outdir = Path(outdir)
    meta_path = outdir / "prepared.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"no prepared data in {outdir} (missing prepared.json)")
    meta = json.loads(meta_path.read_text())
    columns = tuple(Column(**c) for c in meta["columns"])
    names = [c.name for c in columns]
    arrays = {}
    for name in SPLIT_NAMES:
        with open(outdir / f"{name}.csv", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["row_id"] + names + ["label"]:
                raise SchemaError(f"{outdir / name}.csv: columns do not match prepared.json")
            table = np.array([[float(v) for v in row] for row in reader]).reshape(-1, len(header))
        arrays[name] = (table[:, 0].astype(int), table[:, 1:-1], table[:, -1].astype(int))
    st = meta["standardizer"]
    enc = meta["encoder"]
    return PreparedData(
        FeatureSetKind(meta["features"]), columns,
        arrays["train"][1], arrays["train"][2],
        arrays["val"][1], arrays["val"][2],
        arrays["test"][1], arrays["test"][2],
        SplitIndices(arrays["train"][0], arrays["val"][0], arrays["test"][0], meta["seed"]),
        OneHotEncoder(tuple(Column(**c) for c in enc["source"]), enc["levels"]),
        Standardizer(columns, np.array(st["mean"]), np.array(st["std"]), np.array(st["scaled"], dtype=bool)),
    )
