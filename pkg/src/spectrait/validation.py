"""Input validation helpers shared by the estimators and the data layer."""

import numpy as np


def as_float_matrix(X, name="X"):
    """Coerce to a 2-d float64 array, rejecting NaN/Inf."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return X


def as_float_vector(y, name="y"):
    """Coerce to a 1-d float64 array, rejecting NaN/Inf."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return y


def check_same_rows(X, y, x_name="X", y_name="y"):
    if X.shape[0] != y.shape[0]:
        raise ValueError(
            f"{x_name} has {X.shape[0]} rows but {y_name} has {y.shape[0]} entries"
        )


def check_n_features(X, d, name="X"):
    if X.shape[1] != d:
        raise ValueError(f"{name} has {X.shape[1]} columns, expected {d}")
