"""Tabular data loading, standardization, intercept handling and fold splits."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "ColumnMeta",
    "Dataset",
    "FoldAssignment",
    "load_csv",
    "standardize",
    "apply_standardization",
    "attach_intercept",
    "make_folds",
]


class DataError(ValueError):
    """Raised for unreadable or malformed input data."""


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    mean: float = 0.0
    scale: float = 1.0
    is_constant: bool = False
    is_intercept: bool = False


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    responses: np.ndarray
    column_meta: tuple[ColumnMeta, ...]
    task: str = "regression"
    standardized: bool = False
    labels: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.responses, dtype=float)
        if X.ndim != 2:
            raise DataError("features must be a 2-d array")
        if y.shape != (X.shape[0],):
            raise DataError(f"responses have shape {y.shape}, expected ({X.shape[0]},)")
        if len(self.column_meta) != X.shape[1]:
            raise DataError("column_meta must describe every feature column")
        if self.task not in ("regression", "classification"):
            raise DataError(f"unknown task {self.task!r}")
        if self.task == "classification" and not np.all(np.abs(y) == 1.0):
            raise DataError("classification responses must be -1 or +1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def has_intercept(self) -> bool:
        return any(c.is_intercept for c in self.column_meta)

    @property
    def penalized(self) -> np.ndarray:
        """Boolean mask of coordinates that carry a penalty."""
        return np.array([not c.is_intercept for c in self.column_meta], dtype=bool)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(self, features=self.features[rows], responses=self.responses[rows])

    @classmethod
    def from_arrays(cls, X, y, task: str = "regression", names=None) -> "Dataset":
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        names = names or [f"x{j}" for j in range(X.shape[1])]
        return cls(X, np.asarray(y, dtype=float), tuple(ColumnMeta(str(c)) for c in names), task)


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    k: int

    def train_test(self, fold: int):
        test = np.flatnonzero(self.fold_of == fold)
        train = np.flatnonzero(self.fold_of != fold)
        return train, test


def _parse_float(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {col}: cannot parse {text!r} as a number") from None
    if not np.isfinite(value):
        raise DataError(f"row {row}, column {col}: non-finite value {text!r}")
    return value


def load_csv(path, response_column=-1, has_header: bool = True, task: str = "regression") -> Dataset:
    """Read a comma-separated file into an unstandardized :class:`Dataset`.

    ``response_column`` is a header name or a column index (negative indices
    count from the end).  Rows are numbered from 1, not counting the header.
    For classification the two distinct labels are mapped to -1 and +1 in
    sorted order.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    if task not in ("regression", "classification"):
        raise DataError(f"unknown task {task!r}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    header = None
    if has_header:
        if not rows:
            raise DataError(f"{path}: empty file")
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(header) if header is not None else len(rows[0])

    if isinstance(response_column, str) and not response_column.lstrip("-").isdigit():
        if header is None or response_column not in header:
            raise DataError(f"{path}: response column {response_column!r} not found")
        resp = header.index(response_column)
    else:
        resp = int(response_column)
        if not -width <= resp < width:
            raise DataError(f"{path}: response column {resp} out of range for {width} columns")
        resp %= width

    feats, labels = [], []
    for i, r in enumerate(rows, start=1):
        if len(r) != width:
            raise DataError(f"{path}: row {i} has {len(r)} fields, expected {width}")
        row_vals = []
        for j, cell in enumerate(r):
            if j == resp:
                continue
            row_vals.append(_parse_float(cell.strip(), i, j))
        feats.append(row_vals)
        labels.append(r[resp].strip())

    names = [h for j, h in enumerate(header or [f"x{j}" for j in range(width)]) if j != resp]
    X = np.array(feats, dtype=float).reshape(len(rows), width - 1)
    label_order: tuple = ()
    if task == "classification":
        try:
            keyed = {lab: float(lab) for lab in labels}
        except ValueError:
            keyed = {lab: lab for lab in labels}
        distinct = sorted(set(labels), key=lambda lab: keyed[lab])
        if len(distinct) != 2:
            raise DataError(f"{path}: classification needs exactly 2 labels, found {len(distinct)}")
        y = np.where(np.array(labels) == distinct[0], -1.0, 1.0)
        label_order = tuple(distinct)
    else:
        y = np.array([_parse_float(lab, i, resp) for i, lab in enumerate(labels, start=1)])
    meta = tuple(ColumnMeta(name) for name in names)
    return Dataset(X, y, meta, task, labels=label_order)


def standardize(ds: Dataset) -> Dataset:
    """Center every column; scale non-constant ones to unit population std."""
    if ds.n == 0:
        raise DataError("cannot standardize an empty dataset")
    if ds.standardized:
        raise DataError("dataset is already standardized")
    if ds.has_intercept:
        raise DataError("standardize must run before attach_intercept")
    X = ds.features
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # constant up to roundoff of the mean
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(constant, 1.0, std)
    Z = (X - mean) / scale
    meta = tuple(
        replace(c, mean=float(m), scale=float(s), is_constant=bool(k))
        for c, m, s, k in zip(ds.column_meta, mean, scale, constant)
    )
    return replace(ds, features=Z, column_meta=meta, standardized=True)


def apply_standardization(ds: Dataset, X) -> np.ndarray:
    """Transform new rows with the column statistics recorded on ``ds``.

    Returns a matrix with the same column layout as ``ds.features``
    (including the intercept column if one is attached).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    cols = [c for c in ds.column_meta if not c.is_intercept]
    if X.shape[1] != len(cols):
        raise DataError(f"expected {len(cols)} feature columns, got {X.shape[1]}")
    mean = np.array([c.mean for c in cols])
    scale = np.array([c.scale for c in cols])
    Z = (X - mean) / scale
    out = np.empty((X.shape[0], ds.p))
    k = 0
    for j, c in enumerate(ds.column_meta):
        if c.is_intercept:
            out[:, j] = 1.0
        else:
            out[:, j] = Z[:, k]
            k += 1
    return out


def attach_intercept(ds: Dataset) -> Dataset:
    """Append an unpenalized all-ones column."""
    if ds.has_intercept:
        raise DataError("intercept already attached")
    X = np.hstack([ds.features, np.ones((ds.n, 1))])
    meta = ds.column_meta + (ColumnMeta("intercept", is_intercept=True),)
    return replace(ds, features=X, column_meta=meta)


def make_folds(n: int, k: int, seed: int = 0) -> FoldAssignment:
    """Shuffle ``range(n)`` and deal it into ``k`` folds of near-equal size."""
    if not 2 <= k <= n:
        raise ValueError(f"fold count must satisfy 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = np.arange(n) % k
    return FoldAssignment(fold_of, k)
