"""Input validation helpers shared by the estimator, IO and CLI layers."""

from __future__ import annotations

import numpy as np


def as_count_matrix(X, n_features: int | None = None) -> np.ndarray:
    """Coerce X to a 2-D int64 matrix of non-negative counts."""
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.number):
        raise ValueError("feature matrix must be numeric")
    if np.issubdtype(arr.dtype, np.floating):
        if not np.isfinite(arr).all():
            raise ValueError("feature matrix contains non-finite values")
        if not (arr == np.round(arr)).all():
            raise ValueError("traffic counts must be integers")
    arr = arr.astype(np.int64)
    if arr.size and arr.min() < 0:
        raise ValueError("traffic counts must be non-negative")
    if n_features is not None and arr.shape[1] != n_features:
        raise ValueError(
            f"expected {n_features} features per row, got {arr.shape[1]}")
    return arr


def as_label_list(y, n_rows: int) -> list[str]:
    labels = [str(v) for v in y]
    if len(labels) != n_rows:
        raise ValueError(
            f"got {len(labels)} labels for {n_rows} rows")
    return labels


def as_count_vector(x, n_features: int) -> np.ndarray:
    arr = as_count_matrix(np.asarray(x).reshape(1, -1), n_features)
    return arr[0]
