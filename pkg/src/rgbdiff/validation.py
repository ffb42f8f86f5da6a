"""Input validation helpers, in the spirit of sklearn's check_array.

Everything model-facing in this package is a channels-first float array in
[-1, 1]; these helpers centralize the shape/range/finiteness checks so the
estimators can stay terse.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DataError


def check_image(
    x,
    *,
    channels: int | None = None,
    divisible_by: int | None = None,
    value_range: tuple[float, float] | None = None,
    nonnegative: bool = False,
    name: str = "x",
) -> np.ndarray:
    """Validate a single (C, H, W) image array and return it as float32."""
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim != 3:
        raise DataError(f"{name} must have shape (C, H, W), got {arr.shape}")
    c, h, w = arr.shape
    if channels is not None and c != channels:
        raise DataError(f"{name} must have {channels} channels, got {c}")
    if divisible_by is not None and (h % divisible_by or w % divisible_by):
        raise DataError(
            f"{name} spatial dims must be divisible by {divisible_by}, got {h}x{w}"
        )
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    if nonnegative and arr.min() < 0:
        raise DataError(f"{name} must be non-negative, min is {arr.min()}")
    if value_range is not None:
        lo, hi = value_range
        amin, amax = float(arr.min()), float(arr.max())
        if amin < lo - 1e-6 or amax > hi + 1e-6:
            raise DataError(
                f"{name} values must lie in [{lo}, {hi}], got [{amin:.4g}, {amax:.4g}]"
            )
    return arr


def check_batch(
    X,
    *,
    channels: int | None = None,
    divisible_by: int | None = None,
    name: str = "X",
) -> np.ndarray:
    """Validate a (N, C, H, W) batch and return it as float32."""
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim != 4:
        raise DataError(f"{name} must have shape (N, C, H, W), got {arr.shape}")
    if arr.shape[0] == 0:
        raise DataError(f"{name} must contain at least one sample")
    check_image(
        arr[0], channels=channels, divisible_by=divisible_by, name=f"{name}[0]"
    )
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, names=("a", "b")) -> None:
    if a.shape != b.shape:
        raise DataError(f"{names[0]} and {names[1]} shapes differ: {a.shape} vs {b.shape}")


def check_vector(x, *, min_len: int = 1, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size < min_len:
        raise DataError(f"{name} needs at least {min_len} elements, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr
