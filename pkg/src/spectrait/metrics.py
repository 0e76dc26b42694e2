"""Regression metrics reported by every method: RMSE and R^2."""

from dataclasses import dataclass

import numpy as np

from .validation import as_float_vector


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    r2: float
    n: int


def _paired(y, y_pred):
    y = as_float_vector(y, "y")
    y_pred = as_float_vector(y_pred, "y_pred")
    if y.size != y_pred.size:
        raise ValueError(f"length mismatch: y has {y.size}, y_pred has {y_pred.size}")
    return y, y_pred


def rmse(y, y_pred):
    """Root mean squared error, in label units."""
    y, y_pred = _paired(y, y_pred)
    if y.size < 1:
        raise ValueError("rmse needs at least one sample")
    return float(np.sqrt(np.mean((y - y_pred) ** 2)))


def r2(y, y_pred):
    """Coefficient of determination against the test-set mean.

    Can be negative for predictors worse than the mean. Undefined when
    the target has zero variance.
    """
    y, y_pred = _paired(y, y_pred)
    if y.size < 2:
        raise ValueError("r2 needs at least two samples")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("undefined R^2 for zero-variance target")
    ss_res = float(np.sum((y - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


def evaluate(y, y_pred):
    """Bundle both metrics over one prediction vector."""
    return MetricReport(rmse=rmse(y, y_pred), r2=r2(y, y_pred), n=int(len(y)))
