"""Dense matrix helpers over float64 numpy arrays.

A "matrix" throughout the package is a 2-D C-contiguous float64 array.
These wrappers add the shape checks and the finiteness guarantee the
rest of the code relies on: NaN/Inf coming out of a public operation is
always an error, never a silent value.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericError


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def check_finite(a: np.ndarray, name: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} contains NaN or Inf")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} x {b.shape} do not conform")
    return check_finite(a @ b, "matmul result")


def transpose(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(as_matrix(a).T)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"add shapes {a.shape} vs {b.shape} differ")
    return check_finite(a + b, "add result")


def scale(a: np.ndarray, c: float) -> np.ndarray:
    return check_finite(as_matrix(a) * float(c), "scale result")


def frobenius_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(as_matrix(a) ** 2)))


def trace(a: np.ndarray) -> float:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"trace needs a square matrix, got {a.shape}")
    return float(np.trace(a))
