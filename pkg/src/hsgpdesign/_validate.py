"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def as_point(x, dim=None, name="x"):
    """Coerce to a finite 1-D float vector, optionally of a fixed dimension."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D point, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} must have dimension {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def as_points(X, dim=None, name="X"):
    """Coerce to a finite 2-D array of shape (n, d)."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of points, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"{name} must have {dim} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def as_vector(y, n=None, name="y"):
    """Coerce to a finite 1-D float vector of optional fixed length."""
    arr = np.asarray(y, dtype=float).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} must have length {n}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return value


def check_nonnegative(value, name):
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be non-negative and finite, got {value!r}")
    return value


def check_in_open_box(X, half_width, name="X"):
    """Require every coordinate of every point to lie strictly inside (-b, b)."""
    X = np.asarray(X, dtype=float)
    if np.any(np.abs(X) >= half_width):
        raise ValueError(f"{name} must lie strictly inside (-{half_width}, {half_width})^d")
    return X
