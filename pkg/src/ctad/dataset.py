"""Tabular dataset loading, one-class train/test split and z-scoring."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ctad.seeding import derive_seed

EPS_STD = 1e-12


class DatasetError(ValueError):
    """Malformed dataset file or unusable dataset."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DatasetError("features must be (N, D) with one label per row")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError(f"{self.name}: non-finite feature values")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise DatasetError(f"{self.name}: labels must be 0 or 1")

    @property
    def n_anomalies(self) -> int:
        return int(self.labels.sum())

    @property
    def n_normal(self) -> int:
        return int(self.labels.shape[0] - self.labels.sum())


@dataclass(frozen=True)
class TrainTestSplit:
    train: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    seed: int
    train_index: np.ndarray
    test_index: np.ndarray


def _resolve_label_column(header: list[str], label_column: str | int) -> int:
    if isinstance(label_column, str):
        try:
            label_column = int(label_column)
        except ValueError:
            if label_column not in header:
                raise DatasetError(f"label column {label_column!r} not in header {header}")
            return header.index(label_column)
    idx = label_column + len(header) if label_column < 0 else label_column
    if not 0 <= idx < len(header):
        raise DatasetError(f"label column index {label_column} out of range for {len(header)} columns")
    return idx


def load_csv(path: str | Path, label_column: str | int = -1, name: str | None = None) -> Dataset:
    """Read a headed CSV file; the label column may be given by name or index.

    Errors carry the 1-based file line and the column name of the bad cell.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        lab = _resolve_label_column(header, label_column)
        rows: list[list[float]] = []
        labels: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}:{lineno}: expected {len(header)} columns, found {len(row)}"
                )
            values = []
            for col, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path}:{lineno}: column {header[col]!r} is not numeric: {cell!r}"
                    ) from None
                if not np.isfinite(v):
                    raise DatasetError(f"{path}:{lineno}: column {header[col]!r} is not finite")
                values.append(v)
            y = values.pop(lab)
            if y not in (0.0, 1.0):
                raise DatasetError(f"{path}:{lineno}: label {row[lab].strip()!r} is not 0 or 1")
            rows.append(values)
            labels.append(int(y))
    features = np.asarray(rows, dtype=float).reshape(len(rows), len(header) - 1)
    return Dataset(features=features, labels=np.asarray(labels, dtype=np.int64), name=name or path.stem)


def split(ds: Dataset, seed: int) -> TrainTestSplit:
    """Half of the (shuffled) normal rows train; the rest plus every anomaly test.

    Both index sets are returned in ascending source-row order, so the test
    rows line up with the source file.
    """
    normal = np.flatnonzero(ds.labels == 0)
    if normal.size < 2:
        raise DatasetError(f"{ds.name}: need at least 2 normal rows, found {normal.size}")
    rng = np.random.default_rng(derive_seed(seed, "split"))
    shuffled = rng.permutation(normal)
    n_train = normal.size // 2
    train_idx = np.sort(shuffled[:n_train])
    test_idx = np.sort(np.concatenate([shuffled[n_train:], np.flatnonzero(ds.labels == 1)]))
    return TrainTestSplit(
        train=ds.features[train_idx],
        test_features=ds.features[test_idx],
        test_labels=ds.labels[test_idx],
        seed=seed,
        train_index=train_idx,
        test_index=test_idx,
    )


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    stddev: np.ndarray

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.mean) / self.stddev

    def inverse_transform(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.stddev + self.mean


def fit_standardizer(train) -> Standardizer:
    """Column means and population standard deviations of ``train``.

    Columns whose deviation is below ``EPS_STD`` keep a divisor of 1, so they
    are only centred.
    """
    x = np.asarray(train, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DatasetError("cannot fit a standardizer on an empty matrix")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < EPS_STD, 1.0, std)
    return Standardizer(mean=mean, stddev=std)


def transform(std: Standardizer, x) -> np.ndarray:
    return std.transform(x)
