"""Input validation helpers shared by the estimator and the core ops."""

from __future__ import annotations

import numpy as np


def check_matrix(X, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite 2-D float64 array or raise ValueError."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} has no rows")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_labels(y, n_rows: int | None = None, name: str = "y") -> np.ndarray:
    """Return ``y`` as a 1-D int64 array of non-negative labels."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {y.shape}")
    if y.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.equal(np.mod(y, 1), 0)):
        raise ValueError(f"{name} must contain integer class labels")
    y = y.astype(np.int64)
    if np.any(y < 0):
        raise ValueError(f"{name} contains negative labels")
    if n_rows is not None and y.shape[0] != n_rows:
        raise ValueError(
            f"{name} has {y.shape[0]} entries but the input has {n_rows} rows"
        )
    return y


def check_weight_vector(w, name: str = "weights") -> np.ndarray:
    """Return ``w`` flattened to a finite 1-D float64 array."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{name} contains non-finite values")
    return w


def check_mask(mask, name: str = "mask") -> np.ndarray:
    """Return ``mask`` flattened to a 0/1 uint8 array."""
    m = np.asarray(mask).ravel()
    if m.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError(f"{name} must be binary")
    return m.astype(np.uint8)
