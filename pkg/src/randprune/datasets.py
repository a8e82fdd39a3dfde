"""Synthetic datasets, CSV ingestion, and deterministic splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .validation import check_labels, check_matrix

SYNTHETIC_KINDS = ("moons", "blobs", "spirals")


@dataclass
class Dataset:
    inputs: np.ndarray   # (n_samples, n_features) float64
    labels: np.ndarray   # (n_samples,) int64
    class_count: int

    def __post_init__(self):
        self.inputs = check_matrix(self.inputs, "inputs")
        self.labels = check_labels(self.labels, self.inputs.shape[0], "labels")
        if self.class_count < 1:
            raise ValueError(f"class_count must be >= 1, got {self.class_count}")
        if int(self.labels.max()) >= self.class_count:
            raise ValueError(
                f"label {int(self.labels.max())} out of range for "
                f"class_count {self.class_count}"
            )

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.class_count)


def generate_synthetic(
    kind: str, n: int, noise: float = 0.0, seed: int = 0, n_classes: int = 2
) -> Dataset:
    """Deterministic 2-D toy dataset of the given kind.

    moons and spirals are balanced 2-class; blobs places ``n_classes``
    well-separated gaussian clusters.  ``noise`` is the standard
    deviation of additive gaussian jitter.
    """
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    if kind == "moons":
        X, y = _moons(n, rng)
        classes = 2
    elif kind == "spirals":
        X, y = _spirals(n, rng)
        classes = 2
    elif kind == "blobs":
        X, y = _blobs(n, n_classes, rng)
        classes = n_classes
    else:
        raise ValueError(f"kind must be one of {SYNTHETIC_KINDS}, got {kind!r}")
    X = X + rng.normal(0.0, noise, size=X.shape) if noise > 0 else X
    return Dataset(X, y, classes)


def _moons(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n_a = n // 2
    n_b = n - n_a
    t_a = np.linspace(0.0, np.pi, n_a)
    t_b = np.linspace(0.0, np.pi, n_b)
    upper = np.column_stack([np.cos(t_a), np.sin(t_a)])
    lower = np.column_stack([1.0 - np.cos(t_b), 0.5 - np.sin(t_b)])
    X = np.vstack([upper, lower])
    y = np.concatenate([np.zeros(n_a, np.int64), np.ones(n_b, np.int64)])
    return X, y


def _spirals(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n_a = n // 2
    n_b = n - n_a
    parts = []
    labels = []
    for cls, m in ((0, n_a), (1, n_b)):
        t = np.linspace(0.25, 3.0 * np.pi, m)
        radius = 2.0 * t / (3.0 * np.pi)
        angle = t + cls * np.pi
        parts.append(np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]))
        labels.append(np.full(m, cls, np.int64))
    return np.vstack(parts), np.concatenate(labels)


def _blobs(
    n: int, n_classes: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    if n_classes < 2:
        raise ValueError(f"blobs need at least 2 classes, got {n_classes}")
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    centers = 4.0 * np.column_stack([np.cos(angles), np.sin(angles)])
    counts = [n // n_classes] * n_classes
    for i in range(n - sum(counts)):
        counts[i] += 1
    X = np.vstack([np.tile(centers[c], (m, 1)) for c, m in enumerate(counts)])
    y = np.concatenate(
        [np.full(m, c, np.int64) for c, m in enumerate(counts)]
    )
    return X, y


def load_csv(path, label_column) -> Dataset:
    """Read a headered CSV of real-valued features and integer labels.

    ``label_column`` is a header name or a zero-based column index.
    Row order is preserved; class_count is ``max(label) + 1``.  Parse
    failures report the offending row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        if isinstance(label_column, int) or (
            isinstance(label_column, str) and label_column.lstrip("-").isdigit()
        ):
            label_idx = int(label_column)
            if not 0 <= label_idx < len(header):
                raise ValueError(
                    f"{path}: label column index {label_idx} out of range "
                    f"for {len(header)} columns"
                )
        else:
            try:
                label_idx = header.index(label_column)
            except ValueError:
                raise ValueError(
                    f"{path}: label column {label_column!r} not found in "
                    f"header {header}"
                ) from None
        features: list[list[float]] = []
        labels: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {lineno} has {len(row)} cells, expected "
                    f"{len(header)}"
                )
            feat = []
            for ci, cell in enumerate(row):
                if ci == label_idx:
                    try:
                        label = int(cell)
                    except ValueError:
                        raise ValueError(
                            f"{path}: row {lineno}, column {header[ci]!r}: "
                            f"could not parse {cell!r} as an integer label"
                        ) from None
                    if label < 0:
                        raise ValueError(
                            f"{path}: row {lineno}, column {header[ci]!r}: "
                            f"label {label} is negative"
                        )
                    labels.append(label)
                else:
                    try:
                        feat.append(float(cell))
                    except ValueError:
                        raise ValueError(
                            f"{path}: row {lineno}, column {header[ci]!r}: "
                            f"could not parse {cell!r} as a real number"
                        ) from None
            features.append(feat)
    if not features:
        raise ValueError(f"{path}: no data rows")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    return Dataset(X, y, int(y.max()) + 1)


def stratified_split(
    data: Dataset, val_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Disjoint train/validation split with per-class proportions.

    Each class contributes ``round(val_fraction * class_size)`` samples
    to validation (capped so training keeps at least one), so per-class
    proportions match within one sample.  Deterministic in ``seed``.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    val_parts = []
    for c in range(data.class_count):
        idx = np.flatnonzero(data.labels == c)
        if idx.size < 2:
            raise ValueError(
                f"class {c} has {idx.size} sample(s); need at least 2 to split"
            )
        n_val = int(np.floor(val_fraction * idx.size + 0.5))
        n_val = min(max(n_val, 0), idx.size - 1)
        val_parts.append(rng.permutation(idx)[:n_val])
    val_idx = np.sort(np.concatenate(val_parts))
    train_mask = np.ones(len(data), dtype=bool)
    train_mask[val_idx] = False
    train_idx = np.flatnonzero(train_mask)
    return data.subset(train_idx), data.subset(val_idx)


def standardize_pair(
    train: Dataset, val: Dataset
) -> tuple[Dataset, Dataset, np.ndarray, np.ndarray]:
    """Standardize both sets with the train split's per-feature stats.

    Zero-variance features are left unscaled.  Returns the transformed
    datasets plus the (mean, scale) used, so new data can be mapped the
    same way.
    """
    mean = train.inputs.mean(axis=0)
    scale = train.inputs.std(axis=0)
    scale = np.where(scale == 0.0, 1.0, scale)
    t = Dataset((train.inputs - mean) / scale, train.labels, train.class_count)
    v = Dataset((val.inputs - mean) / scale, val.labels, val.class_count)
    return t, v, mean, scale
