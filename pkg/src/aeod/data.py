"""Dataset ingestion, Mean-SD normalization and stratified splitting."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

STD_FLOOR = 1e-12


class DataError(ValueError):
    """Raised for malformed input data (bad CSV cells, missing labels, ...)."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    values: np.ndarray
    labels: Optional[np.ndarray] = None
    feature_names: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"values must be a non-empty 2-D matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            row, col = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {row}, column {col}")
        object.__setattr__(self, "values", _frozen(values))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (values.shape[0],):
                raise DataError(
                    f"labels must have length {values.shape[0]}, got shape {labels.shape}"
                )
            if not np.all((labels == 0) | (labels == 1)):
                raise DataError("labels must be 0 (inlier) or 1 (outlier)")
            object.__setattr__(self, "labels", _frozen(labels, dtype=np.int64))
        names = tuple(self.feature_names) or tuple(f"x{d}" for d in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise DataError(f"expected {values.shape[1]} feature names, got {len(names)}")
        object.__setattr__(self, "feature_names", names)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def subset(self, idx, keep_labels=True) -> "Dataset":
        labels = self.labels[idx] if (keep_labels and self.labels is not None) else None
        return Dataset(self.values[idx], labels, self.feature_names)


def load_csv(path, label_column: Optional[str] = None) -> Dataset:
    """Read a comma-separated, UTF-8 file with a mandatory header row.

    When ``label_column`` is given that column becomes the label vector and
    must hold 0/1; every other column must parse as a finite real.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        rows = [r for r in reader if r]

    label_pos = None
    if label_column is not None:
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not found in header")
        label_pos = header.index(label_column)
    feature_pos = [j for j in range(len(header)) if j != label_pos]
    if not feature_pos:
        raise DataError(f"{path}: no feature columns")
    if not rows:
        raise DataError(f"{path}: no data rows")

    values = np.empty((len(rows), len(feature_pos)))
    labels = np.empty(len(rows), dtype=np.int64) if label_pos is not None else None
    for i, row in enumerate(rows):
        # row numbers reported 1-based, counting the header as row 1
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        for out_j, j in enumerate(feature_pos):
            try:
                v = float(row[j])
            except ValueError:
                raise DataError(
                    f"{path}: row {i + 2}, column {header[j]!r}: cannot parse {row[j]!r}"
                ) from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {i + 2}, column {header[j]!r}: non-finite {row[j]!r}")
            values[i, out_j] = v
        if label_pos is not None:
            cell = row[label_pos].strip()
            try:
                lab = float(cell)
            except ValueError:
                lab = None
            if lab not in (0.0, 1.0):
                raise DataError(
                    f"{path}: row {i + 2}, label column {label_column!r}: expected 0 or 1, got {cell!r}"
                )
            labels[i] = int(lab)
    return Dataset(values, labels, tuple(header[j] for j in feature_pos))


def save_csv(path, data: Dataset, label_column: Optional[str] = "label"):
    header = list(data.feature_names)
    with_labels = data.labels is not None and label_column is not None
    if with_labels:
        header.append(label_column)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n_samples):
            row = [repr(float(v)) for v in data.values[i]]
            if with_labels:
                row.append(str(int(data.labels[i])))
            w.writerow(row)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "std", _frozen(self.std))
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DataError("mean and std must be 1-D of equal length")
        if np.any(self.std <= 0):
            raise DataError("std entries must be positive")

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float))


def fit_normalizer(train) -> NormStats:
    """Column means and population standard deviations (clamped to 1 below 1e-12)."""
    X = train.values if isinstance(train, Dataset) else np.asarray(train, float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("cannot fit normalizer on an empty dataset")
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return NormStats(mean, std)


def apply_normalizer(stats: NormStats, data):
    if isinstance(data, Dataset):
        return Dataset(apply_normalizer(stats, data.values), data.labels, data.feature_names)
    X = np.asarray(data, float)
    if X.ndim != 2 or X.shape[1] != stats.mean.shape[0]:
        raise DataError(f"dimension mismatch: stats have D={stats.mean.shape[0]}, data {X.shape}")
    return (X - stats.mean) / stats.std


def invert_normalizer(stats: NormStats, data):
    if isinstance(data, Dataset):
        return Dataset(invert_normalizer(stats, data.values), data.labels, data.feature_names)
    X = np.asarray(data, float)
    if X.ndim != 2 or X.shape[1] != stats.mean.shape[0]:
        raise DataError(f"dimension mismatch: stats have D={stats.mean.shape[0]}, data {X.shape}")
    return X * stats.std + stats.mean


@dataclass(frozen=True)
class Splits:
    train: Dataset
    validation: Dataset
    test: Dataset
    seed: int
    indices: dict = field(default_factory=dict)


def split_counts(n: int):
    """(train, validation, test) sizes for one stratum of size ``n``."""
    n_test = n // 4
    n_val = (n - n_test) // 3
    return n - n_test - n_val, n_val, n_test


def stratified_split_indices(labels, seed: int):
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts = {"train": [], "validation": [], "test": []}
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        n_train, n_val, n_test = split_counts(len(idx))
        if min(n_train, n_val, n_test) < 1:
            name = "outlier" if cls else "inlier"
            raise DataError(
                f"{name} stratum has {len(idx)} samples; at least 4 are needed to populate "
                "train, validation and test"
            )
        idx = rng.permutation(idx)
        parts["test"].append(idx[:n_test])
        parts["validation"].append(idx[n_test : n_test + n_val])
        parts["train"].append(idx[n_test + n_val :])
    return {k: np.sort(np.concatenate(v)) for k, v in parts.items()}


def stratified_split(data: Dataset, seed: int) -> Splits:
    """3:1 train-pool/test split per label stratum, then a third of the pool to validation.

    The training member carries no labels.
    """
    if data.labels is None:
        raise DataError("stratified_split requires a labeled dataset")
    idx = stratified_split_indices(data.labels, seed)
    return Splits(
        train=data.subset(idx["train"], keep_labels=False),
        validation=data.subset(idx["validation"]),
        test=data.subset(idx["test"]),
        seed=int(seed),
        indices=idx,
    )


def save_splits(splits: Splits, outdir, stats: Optional[NormStats] = None, label_column="label"):
    """Write train/validation/test CSVs plus a JSON sidecar with the seed and index sets."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_csv(outdir / "train.csv", splits.train, label_column)
    save_csv(outdir / "validation.csv", splits.validation, label_column)
    save_csv(outdir / "test.csv", splits.test, label_column)
    sidecar = {
        "seed": splits.seed,
        "indices": {k: [int(i) for i in v] for k, v in splits.indices.items()},
    }
    (outdir / "splits.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    if stats is not None:
        (outdir / "normalization.json").write_text(json.dumps(stats.to_dict(), indent=2) + "\n")


def as_matrix(X, name="X") -> np.ndarray:
    if isinstance(X, Dataset):
        return X.values
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name} contains non-finite values")
    return X

