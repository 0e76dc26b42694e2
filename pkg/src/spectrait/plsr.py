"""Partial least squares regression via NIPALS deflation.

The classic chemometrics baseline for spectra-to-trait regression. One
component at a time: the weight vector is the (normalized) covariance
direction between the deflated spectra and the deflated labels, scores
project the spectra onto it, and both blocks are deflated by the rank-one
fit before the next component. Inputs and labels are always standardized
internally, so the model is invariant to band offsets and label units.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .data import Scaler
from .metrics import rmse
from .validation import as_float_matrix, as_float_vector, check_same_rows

RANK_TOL = 1e-12


class RankExhaustedError(ValueError):
    """Raised when deflation runs out of covariance before k components."""


@dataclass(frozen=True)
class NipalsFit:
    """Weights W (d x k), loadings P (d x k), regression loadings q (k,)."""

    W: np.ndarray
    P: np.ndarray
    q: np.ndarray

    @property
    def n_components(self):
        return self.W.shape[1]

    def coefficients(self):
        """Regression vector b with yhat = X b on standardized data."""
        if self.n_components == 0:
            return np.zeros(self.W.shape[0])
        return self.W @ np.linalg.solve(self.P.T @ self.W, self.q)


def nipals(X, y, k, allow_truncation=False):
    """Run NIPALS on standardized arrays for k components.

    With ``allow_truncation`` the fit stops quietly once the residual
    covariance vanishes (used by cross-validation, where large candidate
    k may exceed the data's effective rank); otherwise that condition
    raises :class:`RankExhaustedError`.
    """
    X = as_float_matrix(X)
    y = as_float_vector(y)
    check_same_rows(X, y)
    n, d = X.shape
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} outside [1, min(n-1, d)] = [1, {min(n - 1, d)}]")

    Xj = X.copy()
    yj = y.copy()
    ws, ps, qs = [], [], []
    for j in range(1, k + 1):
        w = Xj.T @ yj
        norm = np.linalg.norm(w)
        if norm < RANK_TOL:
            if allow_truncation:
                break
            raise RankExhaustedError(f"rank exhausted at component {j}")
        w /= norm
        t = Xj @ w
        tt = float(t @ t)
        if tt < RANK_TOL:
            if allow_truncation:
                break
            raise RankExhaustedError(f"rank exhausted at component {j}")
        p = Xj.T @ t / tt
        q = float(yj @ t) / tt
        Xj -= np.outer(t, p)
        yj -= q * t
        ws.append(w)
        ps.append(p)
        qs.append(q)
    W = np.column_stack(ws) if ws else np.zeros((d, 0))
    P = np.column_stack(ps) if ps else np.zeros((d, 0))
    return NipalsFit(W, P, np.asarray(qs))


class PlsrRegressor(RegressorMixin, BaseEstimator):
    """PLS regression with internal standardization.

    Parameters
    ----------
    n_components : int
        Number of latent components. Must satisfy
        1 <= n_components <= min(n_train - 1, d).
    """

    def __init__(self, n_components=10):
        self.n_components = n_components

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_float_vector(y)
        check_same_rows(X, y)
        self.scaler_ = Scaler.fit(X, y)
        X0 = self.scaler_.transform(X)
        y0 = self.scaler_.transform_labels(y)
        if np.all(y == y[0]):
            # Zero-variance labels standardize to the zero vector; the
            # model degenerates to predicting the constant.
            d = X.shape[1]
            self.fit_ = NipalsFit(np.zeros((d, 0)), np.zeros((d, 0)), np.zeros(0))
        else:
            self.fit_ = nipals(X0, y0, self.n_components)
        self.coef_ = self.fit_.coefficients()
        return self

    def predict(self, X):
        X = as_float_matrix(X)
        if not hasattr(self, "fit_"):
            raise RuntimeError("model is not fitted")
        y0 = self.scaler_.transform(X) @ self.coef_
        return self.scaler_.inverse_labels(y0)


def cv_rmse_curve(X, y, k_max, folds, seed):
    """Mean cross-validated RMSE for each component count 1..k_cap.

    Folds come from a seeded shuffle; candidate counts above the
    smallest fold's effective limit are capped (the returned array's
    length is the capped k_max).
    """
    X = as_float_matrix(X)
    y = as_float_vector(y)
    check_same_rows(X, y)
    n, d = X.shape
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError(f"need at least {folds} samples for {folds}-fold CV")

    perm = np.random.default_rng(seed).permutation(n)
    fold_idx = np.array_split(perm, folds)
    min_train = min(n - fi.size for fi in fold_idx)
    k_cap = max(1, min(k_max, min_train - 1, d))

    mean_rmse = np.empty(k_cap)
    for k in range(1, k_cap + 1):
        errs = []
        for fi in fold_idx:
            mask = np.ones(n, dtype=bool)
            mask[fi] = False
            scaler = Scaler.fit(X[mask], y[mask])
            fitted = nipals(
                scaler.transform(X[mask]),
                scaler.transform_labels(y[mask]),
                min(k, int(mask.sum()) - 1),
                allow_truncation=True,
            )
            pred = scaler.inverse_labels(scaler.transform(X[fi]) @ fitted.coefficients())
            errs.append(rmse(y[fi], pred))
        mean_rmse[k - 1] = np.mean(errs)
    return mean_rmse


def select_components(X, y, k_max, folds, seed):
    """Pick the component count minimizing mean cross-validated RMSE.

    Ties break toward the smaller k.
    """
    curve = cv_rmse_curve(X, y, k_max, folds, seed)
    return int(np.argmin(curve)) + 1  # first minimum = smallest k
