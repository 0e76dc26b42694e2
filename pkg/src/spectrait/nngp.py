"""Infinite-width network kernel and exact Gaussian process regression.

A deep ReLU network whose weights are i.i.d. N(0, sigma_w^2 / fan_in) and
biases N(0, sigma_b^2) converges, as every hidden layer grows wide, to a
Gaussian process. Its covariance follows the arc-cosine recursion

    K^0(x, x') = sigma_b^2 + sigma_w^2 * <x, x'> / d
    K^l(x, x') = sigma_b^2 + sigma_w^2 / (2 pi) * sqrt(v v')
                 * (sin(theta) + (pi - theta) cos(theta))

with v = K^{l-1}(x, x), v' = K^{l-1}(x', x'), and theta the angle
arccos(K^{l-1}(x, x') / sqrt(v v')), clamped against rounding. Applying
the recursion L times gives the kernel of an L-hidden-layer network.

Self-variances evolve as v -> sigma_b^2 + sigma_w^2 * v / 2 (theta = 0),
so cross blocks of the Gram matrix can be recursed with the two sides'
variance vectors carried alongside.

The layer-0 Gram is accumulated with ``np.einsum`` rather than BLAS
matmul: einsum reduces each entry independently in a fixed order, which
makes Gram blocks bit-identical whether computed jointly or separately.
Kernel matrices assembled from blocks therefore agree exactly with the
matrix computed on stacked inputs.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin

from .data import Scaler
from .validation import as_float_matrix, as_float_vector, check_same_rows

JITTER_START = 1e-10
JITTER_MAX = 1e-4

#: Default noise-variance candidates: 7 log-spaced points in [1e-4, 1].
DEFAULT_NOISE_GRID = tuple(np.logspace(-4.0, 0.0, 7))


@dataclass(frozen=True)
class NngpParams:
    """Depth and prior variances of the infinite-width ReLU network."""

    depth: int = 3
    sigma_w2: float = 1.6
    sigma_b2: float = 0.1

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.sigma_w2 < 0:
            raise ValueError("sigma_w2 must be >= 0")
        if self.sigma_b2 < 0:
            raise ValueError("sigma_b2 must be >= 0")


def _relu_step(v, vp, c, sw2, sb2):
    s = np.sqrt(v * vp)
    # a zero self-variance forces a zero covariance; treat as aligned
    cos_t = np.clip(np.divide(c, s, out=np.ones_like(s), where=s > 0), -1.0, 1.0)
    theta = np.arccos(cos_t)
    angular = np.sin(theta) + (np.pi - theta) * cos_t
    return sb2 + (sw2 / (2.0 * np.pi)) * s * angular


def kernel_entry(x, xp, params):
    """Scalar kernel between two standardized input vectors.

    Straightforward per-pair recursion; the vectorized
    :func:`kernel_matrix` must agree with it entrywise to 1e-12.
    """
    x = as_float_vector(np.asarray(x), "x")
    xp = as_float_vector(np.asarray(xp), "xp")
    if x.size != xp.size:
        raise ValueError(f"dimension mismatch: {x.size} vs {xp.size}")
    d = x.size
    sw2, sb2 = params.sigma_w2, params.sigma_b2
    v = sb2 + sw2 * float(x @ x) / d
    vp = sb2 + sw2 * float(xp @ xp) / d
    c = sb2 + sw2 * float(x @ xp) / d
    for _ in range(params.depth):
        c = float(_relu_step(v, vp, c, sw2, sb2))
        v = sb2 + sw2 * v / 2.0
        vp = sb2 + sw2 * vp / 2.0
    return c


def kernel_matrix(A, B=None, params=NngpParams()):
    """Gram block K(A, B); with B omitted, the exactly symmetric K(A, A)."""
    A = as_float_matrix(A, "A")
    sw2, sb2 = params.sigma_w2, params.sigma_b2
    d = A.shape[1]
    va = sb2 + sw2 * np.einsum("ij,ij->i", A, A) / d
    if B is None:
        C = sb2 + sw2 * np.einsum("id,jd->ij", A, A) / d
        vb = va
    else:
        B = as_float_matrix(B, "B")
        if B.shape[1] != d:
            raise ValueError(f"dimension mismatch: A has {d} columns, B has {B.shape[1]}")
        C = sb2 + sw2 * np.einsum("id,jd->ij", A, B) / d
        vb = sb2 + sw2 * np.einsum("ij,ij->i", B, B) / d
    for _ in range(params.depth):
        C = _relu_step(va[:, None], vb[None, :], C, sw2, sb2)
        va = sb2 + sw2 * va / 2.0
        vb = va if B is None else sb2 + sw2 * vb / 2.0
    return C


def kernel_diag(A, params=NngpParams()):
    """Self-variances k(x_i, x_i) without forming the full Gram matrix."""
    A = as_float_matrix(A, "A")
    sw2, sb2 = params.sigma_w2, params.sigma_b2
    v = sb2 + sw2 * np.einsum("ij,ij->i", A, A) / A.shape[1]
    for _ in range(params.depth):
        v = sb2 + sw2 * v / 2.0
    return v


class KernelNotPsdError(np.linalg.LinAlgError):
    pass


def cholesky_with_jitter(K, noise_diag):
    """Lower Cholesky of K + diag(noise) + jitter*I with jitter escalation.

    Jitter starts at 1e-10 and is multiplied by 10 up to 1e-4 before
    giving up, repairing numerically indefinite kernels without silently
    over-regularizing.
    """
    n = K.shape[0]
    A = K + np.diag(np.broadcast_to(noise_diag, (n,)).astype(float))
    jitter = JITTER_START
    while True:
        try:
            L = cholesky(A + jitter * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_MAX:
                raise KernelNotPsdError(
                    f"kernel not PSD at jitter {JITTER_MAX:g}"
                ) from None


def lml_from_factor(L, alpha, y):
    """Log marginal likelihood from a Cholesky factor and solved weights."""
    n = y.size
    return float(
        -0.5 * (y @ alpha) - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2.0 * np.pi)
    )


def log_marginal_likelihood(X, y, params, noise_var):
    """GP evidence of standardized data under the network kernel."""
    X = as_float_matrix(X)
    y = as_float_vector(y)
    check_same_rows(X, y)
    K = kernel_matrix(X, params=params)
    L, _ = cholesky_with_jitter(K, noise_var)
    alpha = cho_solve((L, True), y)
    return lml_from_factor(L, alpha, y)


def select_noise(X, y, params, grid=DEFAULT_NOISE_GRID):
    """Noise variance maximizing the evidence; ties favor the larger
    (more regularized) candidate."""
    grid = list(grid)
    if not grid:
        raise ValueError("noise grid must be nonempty")
    best, best_lml = None, -np.inf
    for noise in sorted(grid):
        lml = log_marginal_likelihood(X, y, params, noise)
        if lml >= best_lml:
            best, best_lml = noise, lml
    return best


class NngpGpRegressor(RegressorMixin, BaseEstimator):
    """Exact GP regression under the infinite-width network kernel.

    Parameters
    ----------
    depth : int
        Number of hidden layers in the limiting network.
    sigma_w2, sigma_b2 : float
        Prior weight/bias variances.
    noise : float or "grid"
        Observation noise variance on the standardized label scale;
        "grid" selects it by maximizing the evidence over ``noise_grid``.
    noise_grid : sequence of float, optional
        Candidates for noise selection (defaults to 7 log-spaced points
        in [1e-4, 1]).
    standardize : bool
        Standardize inputs per band and labels internally (always wanted
        on raw reflectance; turn off only when feeding pre-standardized
        data, e.g. for exact-equivalence checks).
    """

    def __init__(self, depth=3, sigma_w2=1.6, sigma_b2=0.1, noise="grid",
                 noise_grid=None, standardize=True):
        self.depth = depth
        self.sigma_w2 = sigma_w2
        self.sigma_b2 = sigma_b2
        self.noise = noise
        self.noise_grid = noise_grid
        self.standardize = standardize

    def _params(self):
        return NngpParams(self.depth, self.sigma_w2, self.sigma_b2)

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_float_vector(y)
        check_same_rows(X, y)
        if X.shape[0] < 1:
            raise ValueError("need at least one training sample")
        params = self._params()
        if self.standardize:
            self.scaler_ = Scaler.fit(X, y)
        else:
            self.scaler_ = None
        X0 = self.scaler_.transform(X) if self.scaler_ else X.copy()
        y0 = self.scaler_.transform_labels(y) if self.scaler_ else y.copy()

        if self.noise == "grid":
            grid = self.noise_grid if self.noise_grid is not None else DEFAULT_NOISE_GRID
            self.noise_ = float(select_noise(X0, y0, params, grid))
        else:
            self.noise_ = float(self.noise)
            if self.noise_ < 0:
                raise ValueError("noise variance must be >= 0")

        K = kernel_matrix(X0, params=params)
        self.L_, self.jitter_ = cholesky_with_jitter(K, self.noise_)
        self.alpha_ = cho_solve((self.L_, True), y0)
        self.X_train_ = X0
        self.lml_ = lml_from_factor(self.L_, self.alpha_, y0)
        return self

    def predict(self, X, return_var=False):
        """Posterior mean (and optionally variance) on the label scale."""
        if not hasattr(self, "alpha_"):
            raise RuntimeError("model is not fitted")
        X = as_float_matrix(X)
        params = self._params()
        X0 = self.scaler_.transform(X) if self.scaler_ else X
        K_cross = kernel_matrix(self.X_train_, X0, params=params)
        mean0 = K_cross.T @ self.alpha_
        mean = self.scaler_.inverse_labels(mean0) if self.scaler_ else mean0
        if not return_var:
            return mean
        v = solve_triangular(self.L_, K_cross, lower=True)
        var0 = kernel_diag(X0, params) - np.einsum("ij,ij->j", v, v)
        var0 = np.maximum(var0, 0.0)
        if self.scaler_:
            var0 = var0 * self.scaler_.label_std**2
        return mean, var0
