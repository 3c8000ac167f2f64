"""Datasets: loading, standardization, stratified holdout and noise injection."""
from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

DATA_DIR_ENV = "QLMCHD_DATA_DIR"
DELIMITED = "delimited"
SPARSE = "sparse-index"


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    classes: tuple = ()
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        y = np.asarray(self.labels, dtype=object).ravel()
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.isfinite(X).all():
            raise DataError("non-finite feature values")
        classes = tuple(self.classes) if self.classes else tuple(sorted(set(y.tolist()), key=str))
        unknown = set(y.tolist()) - set(classes)
        if unknown:
            raise DataError(f"labels outside the declared classes: {sorted(map(str, unknown))}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "classes", classes)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return len(self.classes)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return replace(self, features=self.features[idx], labels=self.labels[idx])

    def with_features(self, X) -> "Dataset":
        return replace(self, features=X)

    def with_labels(self, y) -> "Dataset":
        return replace(self, labels=y)


# -- loading --------------------------------------------------------------------


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _label(tok):
    tok = tok.strip()
    # "1" and "1.0" must name the same class
    if _is_number(tok):
        v = float(tok)
        if v.is_integer():
            return str(int(v))
    return tok


def resolve_path(path) -> Path:
    """Return ``path`` if it exists, else look it up (with or without ``.csv``) in ``$QLMCHD_DATA_DIR``."""
    p = Path(path)
    if p.exists():
        return p
    base = os.environ.get(DATA_DIR_ENV)
    if base:
        for cand in (Path(base) / p, Path(base) / f"{p}.csv"):
            if cand.exists():
                return cand
    raise DataError(f"dataset not found: {path}")


def _read_declared_classes(lines):
    for line in lines:
        s = line.strip()
        if s.startswith("#") and s[1:].strip().lower().startswith("classes:"):
            return tuple(_label(t) for t in s.split(":", 1)[1].split(",") if t.strip())
    return ()


def _load_delimited(path, lines, delimiter, label_column):
    rows, labels = [], []
    width = None
    for lineno, row in enumerate(csv.reader(lines, delimiter=delimiter), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        row = [t.strip() for t in row]
        try:
            lab = row.pop(label_column)
        except IndexError:
            raise DataError(f"{path}:{lineno}: no label column {label_column}") from None
        try:
            values = [float(t) for t in row]
        except ValueError:
            if not rows and width is None:
                width = len(row)  # header line
                continue
            bad = next(t for t in row if not _is_number(t))
            raise DataError(f"{path}:{lineno}: non-numeric feature value {bad!r}") from None
        if width is not None and len(values) != width:
            raise DataError(f"{path}:{lineno}: expected {width} features, found {len(values)}")
        width = len(values)
        rows.append(values)
        labels.append(_label(lab))
    X = np.asarray(rows, dtype=float).reshape(len(rows), width or 0)
    return X, labels


def _load_sparse(path, lines, n_features):
    entries, labels = [], []
    d = 0
    for lineno, line in enumerate(lines, start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        toks = s.split()
        labels.append(_label(toks[0]))
        row = {}
        for tok in toks[1:]:
            try:
                k, v = tok.split(":")
                k, v = int(k), float(v)
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed index:value pair {tok!r}") from None
            if k < 1:
                raise DataError(f"{path}:{lineno}: feature indices start at 1, got {k}")
            row[k - 1] = v
            d = max(d, k)
        entries.append(row)
    d = n_features or d
    X = np.zeros((len(entries), d))
    for i, row in enumerate(entries):
        for k, v in row.items():
            if k >= d:
                raise DataError(f"{path}: feature index {k + 1} exceeds n_features={d}")
            X[i, k] = v
    return X, labels


def load_dataset(
    path,
    fmt=DELIMITED,
    delimiter=",",
    label_column=-1,
    name=None,
    n_features=None,
) -> Dataset:
    """Read a dataset file.

    ``delimited``: one sample per line, numeric features and a label in
    ``label_column``; an optional header line is skipped.  ``sparse-index``:
    ``label idx:value ...`` with 1-based indices.  A comment line
    ``# classes: a,b,c`` declares the class set; other labels are then an error.
    """
    path = resolve_path(path)
    lines = path.read_text().splitlines()
    if fmt == DELIMITED:
        X, labels = _load_delimited(path, lines, delimiter, label_column)
    elif fmt == SPARSE:
        X, labels = _load_sparse(path, lines, n_features)
    else:
        raise DataError(f"unknown format {fmt!r}")
    if len(labels) == 0:
        raise DataError(f"{path}: no samples")
    return Dataset(X, labels, _read_declared_classes(lines), name or path.stem)


def load_features(path, n_features, delimiter=",", label_column=-1) -> np.ndarray:
    """Feature rows of a prediction input (possibly empty).

    Rows may carry exactly ``n_features`` values, or one more in
    ``label_column``, which is dropped.
    """
    path = resolve_path(path)
    rows = []
    lines = path.read_text().splitlines()
    for lineno, row in enumerate(csv.reader(lines, delimiter=delimiter), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        row = [t.strip() for t in row]
        if len(row) == n_features + 1:
            row.pop(label_column)
        elif len(row) != n_features:
            raise DataError(f"{path}:{lineno}: expected {n_features} features, found {len(row)} fields")
        try:
            rows.append([float(t) for t in row])
        except ValueError:
            if rows:
                bad = next(t for t in row if not _is_number(t))
                raise DataError(f"{path}:{lineno}: non-numeric feature value {bad!r}") from None
            # header line
    X = np.asarray(rows, dtype=float).reshape(len(rows), n_features)
    if not np.isfinite(X).all():
        raise DataError(f"{path}: non-finite feature values")
    return X


# -- preprocessing ----------------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        return cls(mean, std)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        safe = np.where(self.scale > 0, self.scale, 1.0)
        # zero-variance features carry no information; map them to 0
        return np.where(self.scale > 0, (X - self.mean) / safe, 0.0)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


def standardize(train: Dataset, *others: Dataset):
    """Z-score every feature with the training mean/std; returns ``(train, [others...])``."""
    st = Standardizer.fit(train.features)
    return train.with_features(st.transform(train.features)), [o.with_features(st.transform(o.features)) for o in others]


def holdout_split(dataset: Dataset, ratio: float, seed) -> tuple[Dataset, Dataset]:
    """Stratified random split; each class is split at ``ratio`` with the remainder to train."""
    if not 0 < ratio < 1:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in dataset.classes:
        idx = np.flatnonzero(dataset.labels == c)
        if idx.size == 0:
            continue
        if idx.size == 1:
            warnings.warn(f"class {c!r} has a single sample; it goes to the training split")
        idx = rng.permutation(idx)
        n_test = int(math.floor((1.0 - ratio) * idx.size + 1e-9))
        n_test = min(n_test, idx.size - 1)
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    if train_idx.size == 0 or test_idx.size == 0:
        raise ValueError(f"ratio {ratio} leaves an empty split for n={dataset.n}")
    return dataset.subset(train_idx), dataset.subset(test_idx)


def stratified_subsample(dataset: Dataset, size: int, seed) -> Dataset:
    if size >= dataset.n:
        return dataset
    train, _ = holdout_split(dataset, size / dataset.n, seed)
    return train


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def inject_label_noise(dataset: Dataset, fraction: float, seed) -> Dataset:
    """Relabel exactly ``round(fraction * n)`` samples, each to a different random class."""
    if not 0 <= fraction < 1:
        raise ValueError(f"label-noise fraction must lie in [0, 1), got {fraction}")
    if dataset.class_count < 2:
        raise ValueError("label noise needs at least two classes")
    k = _round_half_up(fraction * dataset.n)
    if k == 0:
        return dataset
    rng = np.random.default_rng(seed)
    chosen = rng.choice(dataset.n, size=k, replace=False)
    classes = list(dataset.classes)
    y = dataset.labels.copy()
    for i in chosen:
        others = [c for c in classes if c != y[i]]
        y[i] = others[rng.integers(len(others))]
    return dataset.with_labels(y)


def inject_feature_noise(dataset: Dataset, level: float, seed, feature_std=None) -> Dataset:
    """Add zero-mean Gaussian noise with per-feature std ``level * feature_std``.

    ``feature_std`` defaults to the dataset's own per-feature std; pass the
    training split's std to noise a test split on the same scale.
    """
    if level < 0:
        raise ValueError(f"noise level must be >= 0, got {level}")
    if level == 0:
        return dataset
    scale = dataset.features.std(axis=0) if feature_std is None else np.asarray(feature_std, dtype=float)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(dataset.features.shape) * (level * scale)
    return dataset.with_features(dataset.features + noise)


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions, dtype=object).ravel()
    labels = np.asarray(labels, dtype=object).ravel()
    if predictions.shape != labels.shape:
        raise ValueError(f"{predictions.shape[0]} predictions for {labels.shape[0]} labels")
    if labels.size == 0:
        raise ValueError("accuracy of an empty set")
    return 100.0 * float(np.mean(predictions == labels))
