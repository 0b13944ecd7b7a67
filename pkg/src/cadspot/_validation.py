"""Input validation helpers shared by the estimators and functions."""
from __future__ import annotations

import math
from typing import Iterable

import numpy as np
from sklearn.utils import check_array


def check_positive(value, name: str) -> float:
    """Return ``value`` as float, raising ValueError unless finite and > 0."""
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a number, got {value!r}") from None
    if not math.isfinite(v) or v <= 0:
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")
    return v


def check_nonnegative(value, name: str) -> float:
    v = float(value)
    if not math.isfinite(v) or v < 0:
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
    return v


def check_option(value, options: Iterable, name: str):
    options = tuple(options)
    if value not in options:
        raise ValueError(f"{name} must be one of {options}, got {value!r}")
    return value


def check_feature_matrix(X, n_rows: int | None = None, name: str = "features") -> np.ndarray:
    """2-D finite float matrix, optionally with a fixed row count."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                    ensure_min_samples=0, ensure_min_features=0, input_name=name)
    if n_rows is not None and X.shape[0] != n_rows:
        raise ValueError(f"{name} has {X.shape[0]} rows, expected {n_rows}")
    return X


def check_same_length(a, b, names: tuple[str, str] = ("a", "b")) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"{names[0]} and {names[1]} differ in shape: {a.shape} vs {b.shape}")
    return a, b
