"""Input validation helpers used by the estimators and stage functions."""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, InvalidInputError


def check_signal(x, name: str = "signal", min_length: int = 1) -> np.ndarray:
    """Return ``x`` as a finite 1-D float64 array of at least ``min_length`` samples."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size < min_length:
        raise InvalidInputError(f"{name} needs at least {min_length} samples, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return arr


def check_frames(x, name: str, n_cols: int | None = None) -> np.ndarray:
    """Return ``x`` as a finite 2-D float array (frames x columns)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D (frames x bins), got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise InvalidInputError(f"{name} must have {n_cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return arr


def check_same_length(**arrays) -> int:
    lengths = {k: len(v) for k, v in arrays.items()}
    if len(set(lengths.values())) > 1:
        raise InvalidInputError(f"frame counts disagree: {lengths}")
    return next(iter(lengths.values()))


def check_positive_int(value, name: str) -> int:
    if int(value) != value or value <= 0:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_in_range(value, name: str, low, high) -> None:
    if not (low <= value <= high):
        raise ConfigError(f"{name}={value!r} outside [{low}, {high}]")
