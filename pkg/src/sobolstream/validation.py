"""Input validation helpers used by the estimator and partition builders."""

from __future__ import annotations

import numpy as np

from .errors import DataError

# Finiteness checks on very wide matrices are chunked by column so the
# temporary boolean mask never rivals the data itself in size.
_FINITE_CHECK_CHUNK = 4_000_000


def as_float_vector(values, name: str = "values", allow_empty: bool = True) -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        if not allow_empty:
            raise DataError(f"{name} must be nonempty")
        return arr
    if not np.isfinite(arr).all():
        raise DataError(f"{name} contains non-finite values")
    return arr


def as_sample_matrix(x, name: str = "x") -> np.ndarray:
    """Coerce to a 2-D float64 sample matrix (rows = samples, columns = inputs)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DataError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    check_finite_matrix(arr, name)
    return arr


def check_finite_matrix(arr: np.ndarray, name: str = "x") -> None:
    """Raise ``DataError`` if any matrix entry is non-finite. Chunked by column."""
    if arr.size == 0:
        return
    if arr.size <= _FINITE_CHECK_CHUNK:
        if not np.isfinite(arr).all():
            raise DataError(f"{name} contains non-finite values")
        return
    cols_per_chunk = max(1, _FINITE_CHECK_CHUNK // max(1, arr.shape[0]))
    for j in range(0, arr.shape[1], cols_per_chunk):
        if not np.isfinite(arr[:, j : j + cols_per_chunk]).all():
            raise DataError(f"{name} contains non-finite values")


def check_xy(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Validate a paired (inputs, outputs) batch and return float64 arrays."""
    xa = as_sample_matrix(x, "x")
    ya = as_float_vector(y, "y")
    if xa.shape[0] != ya.shape[0]:
        raise DataError(
            f"x has {xa.shape[0]} rows but y has {ya.shape[0]} entries"
        )
    return xa, ya
