"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np


def check_sequence(seq, min_length: int = 1, name: str = "sequence") -> np.ndarray:
    """Validate a single ``T x H x W`` field movie and return it as float64."""
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 3-D (T, H, W), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {arr.shape}")
    if arr.shape[0] < min_length:
        raise ValueError(f"{name} needs at least {min_length} time steps, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_sequences(X, min_length: int = 1) -> np.ndarray:
    """Validate a batch ``N x T x H x W``; a single ``T x H x W`` is promoted."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ValueError(f"expected sequences of shape (N, T, H, W), got {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("no sequences given")
    for k in range(arr.shape[0]):
        check_sequence(arr[k], min_length, name=f"sequence {k}")
    return arr


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value
