"""Adaptive transfer-kernel Gaussian process with a low-rank path.

Source and target samples are stacked (source rows first, always) and
covariances between the two tasks are scaled by a relatedness weight
lambda in [0, 1]:

    K(lambda) = [[K_ss, lambda K_st], [lambda K_st^T, K_tt]]

which equals lambda * K_pooled + (1 - lambda) * blockdiag(K_ss, K_tt),
a convex combination of PSD matrices, hence PSD for any base kernel.
lambda = 0 decouples the tasks (target predictions reduce to a
target-only GP); lambda = 1 pools them into one task. The weight is
estimated by maximizing the log marginal likelihood of the stacked
labels over a grid, optionally jointly with per-domain noise variances;
an unrelated source then drives lambda toward 0, which is the guard
against negative transfer.

For large stacked sets, a Nystrom approximation K ~= C W^+ C^T over a
seeded landmark subset replaces the exact factorization, and predictions
use the Woodbury identity so no dense (n x n) system is ever solved.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin

from .data import Scaler
from .nngp import (
    DEFAULT_NOISE_GRID,
    JITTER_START,
    NngpParams,
    cholesky_with_jitter,
    kernel_diag,
    kernel_matrix,
    lml_from_factor,
)
from .validation import as_float_matrix, as_float_vector, check_same_rows

DEFAULT_LAMBDA_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))

EIGEN_FLOOR = 1e-10

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def assemble_transfer_kernel(Kss, Kst, Ktt, lam):
    """Stacked kernel with cross-task blocks scaled by lambda."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    Kss = as_float_matrix(Kss, "Kss")
    Kst = as_float_matrix(Kst, "Kst")
    Ktt = as_float_matrix(Ktt, "Ktt")
    n_s, n_t = Kss.shape[0], Ktt.shape[0]
    if Kss.shape != (n_s, n_s) or Ktt.shape != (n_t, n_t):
        raise ValueError("Kss and Ktt must be square")
    if Kst.shape != (n_s, n_t):
        raise ValueError(
            f"Kst must be {n_s}x{n_t} to match Kss and Ktt, got {Kst.shape}"
        )
    scaled = lam * Kst
    return np.block([[Kss, scaled], [scaled.T, Ktt]])


def _noise_diag(n_s, n_t, noise_s, noise_t):
    return np.concatenate([np.full(n_s, float(noise_s)), np.full(n_t, float(noise_t))])


@dataclass(frozen=True)
class LambdaEstimate:
    """Result of the relatedness search.

    ``grid`` holds every evaluated lambda (sorted ascending) and ``lml``
    the corresponding evidence, profiled over the noise candidates;
    ``lambda_star`` attains the maximum of that curve, with ties broken
    toward smaller lambda.
    """

    lambda_star: float
    noise_source: float
    noise_target: float
    grid: np.ndarray
    lml: np.ndarray


def _lambda_search(Kss, Kst, Ktt, y, lambda_grid, noise_pairs, refine_iters):
    """Maximize stacked-data evidence over lambda (and noise pairs).

    For each lambda the evidence is profiled over ``noise_pairs`` (noise
    ties favoring the later, larger pair); lambda ties break toward the
    smaller value. Optional golden-section refinement spends
    ``refine_iters`` extra evaluations inside the winning grid cell,
    using that cell's noise pair.
    """
    n_s, n_t = Kss.shape[0], Ktt.shape[0]
    evaluated, noises = {}, {}

    def score(lam, pairs):
        best = (-np.inf, None)
        K = assemble_transfer_kernel(Kss, Kst, Ktt, lam)
        for ns, nt in pairs:
            L, _ = cholesky_with_jitter(K, _noise_diag(n_s, n_t, ns, nt))
            alpha = cho_solve((L, True), y)
            lml = lml_from_factor(L, alpha, y)
            if lml >= best[0]:
                best = (lml, (ns, nt))
        return best

    for lam in lambda_grid:
        evaluated[lam], noises[lam] = score(lam, noise_pairs)

    best_lam = _argmax_smallest(evaluated)
    if refine_iters >= 2:
        pos = lambda_grid.index(best_lam)
        lo = lambda_grid[max(pos - 1, 0)]
        hi = lambda_grid[min(pos + 1, len(lambda_grid) - 1)]
        pair = noises[best_lam]

        def eval_at(lam):
            lam = float(np.round(lam, 12))
            if lam not in evaluated:
                evaluated[lam], noises[lam] = score(lam, [pair])
            return evaluated[lam]

        _golden_section_max(eval_at, lo, hi, refine_iters)
        best_lam = _argmax_smallest(evaluated)

    grid = np.array(sorted(evaluated))
    curve = np.array([evaluated[v] for v in grid])
    pair = noises[best_lam]
    return LambdaEstimate(best_lam, pair[0], pair[1], grid, curve)


def _argmax_smallest(evaluated):
    """Argmax over a {lambda: lml} dict, ties toward the smaller lambda."""
    best_lam, best_lml = None, -np.inf
    for lam in sorted(evaluated):
        if evaluated[lam] > best_lml:
            best_lam, best_lml = lam, evaluated[lam]
    return best_lam


def _golden_section_max(eval_at, lo, hi, budget):
    """Golden-section maximum search spending ``budget`` evaluations."""
    if hi <= lo:
        return
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc = eval_at(c)
    fd = eval_at(d)
    for _ in range(budget - 2):
        if fc >= fd:  # maximum in [a, d]; ties narrow toward smaller lambda
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = eval_at(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = eval_at(d)


def _check_pair(Xs, ys, Xt, yt):
    Xs = as_float_matrix(Xs, "X_source")
    ys = as_float_vector(ys, "y_source")
    Xt = as_float_matrix(Xt, "X_target")
    yt = as_float_vector(yt, "y_target")
    check_same_rows(Xs, ys, "X_source", "y_source")
    check_same_rows(Xt, yt, "X_target", "y_target")
    if Xs.shape[0] == 0:
        raise ValueError("source dataset must be nonempty")
    if Xt.shape[0] == 0:
        raise ValueError("target dataset must be nonempty")
    if Xs.shape[1] != Xt.shape[1]:
        raise ValueError("source and target must share the wavelength grid")
    return Xs, ys, Xt, yt


def estimate_lambda(X_source, y_source, X_target, y_target, params=NngpParams(),
                    noise_grid=DEFAULT_NOISE_GRID, lambda_grid=DEFAULT_LAMBDA_GRID,
                    refine_iters=0):
    """Grid search for the task-relatedness weight on standardized data.

    For each lambda the transfer kernel over the stacked training inputs
    scores the stacked labels by log marginal likelihood, with the two
    per-domain noise variances chosen jointly from ``noise_grid``.
    Ties break toward smaller lambda: transferring less is the
    conservative default.
    """
    Xs, ys, Xt, yt = _check_pair(X_source, y_source, X_target, y_target)
    lambda_grid = sorted(float(v) for v in lambda_grid)
    if not lambda_grid:
        raise ValueError("lambda grid must be nonempty")
    if lambda_grid[0] < 0.0 or lambda_grid[-1] > 1.0:
        raise ValueError("lambda grid must lie within [0, 1]")
    noise_pairs = [(ns, nt) for ns in sorted(noise_grid) for nt in sorted(noise_grid)]
    if not noise_pairs:
        raise ValueError("noise grid must be nonempty")

    Kss = kernel_matrix(Xs, params=params)
    Kst = kernel_matrix(Xs, Xt, params=params)
    Ktt = kernel_matrix(Xt, params=params)
    y = np.concatenate([ys, yt])
    return _lambda_search(Kss, Kst, Ktt, y, lambda_grid, noise_pairs, refine_iters)


class TransferGpRegressor(RegressorMixin, BaseEstimator):
    """GP regression on the transfer kernel over stacked source+target data.

    Parameters
    ----------
    lam : float or "auto"
        Task relatedness in [0, 1]; "auto" estimates it by evidence
        maximization over ``lambda_grid``.
    depth, sigma_w2, sigma_b2 : base network-kernel hyperparameters.
    noise : "auto", float, or (float, float)
        Per-domain noise variances (source, target) on the standardized
        label scale. A single float applies to both domains; "auto"
        selects both jointly with lambda from ``noise_grid``.
    landmarks : "exact" or int
        "exact" factorizes the full stacked kernel; an integer m fits a
        rank-m Nystrom approximation over m seeded uniform landmarks and
        predicts through the Woodbury identity.
    landmark_seed : int
        Seed for the landmark draw.
    refine_iters : int
        Extra golden-section evidence evaluations after the lambda grid
        search (0 disables refinement).
    standardize : bool
        Standardize inputs and labels internally using statistics of the
        target training data only (the prediction task lives in the
        target domain; source label scale may differ).

    Stacked row order is always [source rows; target rows].
    """

    def __init__(self, lam="auto", depth=3, sigma_w2=1.6, sigma_b2=0.1,
                 noise="auto", noise_grid=None, lambda_grid=None,
                 landmarks="exact", landmark_seed=0, refine_iters=0,
                 standardize=True):
        self.lam = lam
        self.depth = depth
        self.sigma_w2 = sigma_w2
        self.sigma_b2 = sigma_b2
        self.noise = noise
        self.noise_grid = noise_grid
        self.lambda_grid = lambda_grid
        self.landmarks = landmarks
        self.landmark_seed = landmark_seed
        self.refine_iters = refine_iters
        self.standardize = standardize

    def _params(self):
        return NngpParams(self.depth, self.sigma_w2, self.sigma_b2)

    def _resolve_hyperparameters(self, Xs, ys, Xt, yt):
        """Fill in lambda and the per-domain noises, searching if asked."""
        if self.noise == "auto":
            grid = self.noise_grid if self.noise_grid is not None else DEFAULT_NOISE_GRID
            noise_pairs = [(ns, nt) for ns in sorted(grid) for nt in sorted(grid)]
        elif np.isscalar(self.noise):
            noise_pairs = [(float(self.noise), float(self.noise))]
        else:
            noise_s, noise_t = (float(v) for v in self.noise)
            noise_pairs = [(noise_s, noise_t)]

        if self.lam == "auto":
            lambda_grid = self.lambda_grid if self.lambda_grid is not None else DEFAULT_LAMBDA_GRID
            lambda_grid = sorted(float(v) for v in lambda_grid)
        else:
            lam = float(self.lam)
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"lambda must lie in [0, 1], got {lam}")
            lambda_grid = [lam]

        if self.lam == "auto" or self.noise == "auto":
            params = self._params()
            Kss = kernel_matrix(Xs, params=params)
            Kst = kernel_matrix(Xs, Xt, params=params)
            Ktt = kernel_matrix(Xt, params=params)
            est = _lambda_search(Kss, Kst, Ktt, np.concatenate([ys, yt]),
                                 lambda_grid, noise_pairs, self.refine_iters)
            return est.lambda_star, est.noise_source, est.noise_target, est
        return lambda_grid[0], noise_pairs[0][0], noise_pairs[0][1], None

    def fit(self, X_source, y_source, X_target, y_target):
        Xs, ys, Xt, yt = _check_pair(X_source, y_source, X_target, y_target)

        if self.standardize:
            # Statistics from the target training data only.
            self.scaler_ = Scaler.fit(Xt, yt)
        else:
            self.scaler_ = None
        Xs0 = self.scaler_.transform(Xs) if self.scaler_ else Xs.copy()
        Xt0 = self.scaler_.transform(Xt) if self.scaler_ else Xt.copy()
        ys0 = self.scaler_.transform_labels(ys) if self.scaler_ else ys.copy()
        yt0 = self.scaler_.transform_labels(yt) if self.scaler_ else yt.copy()

        lam, noise_s, noise_t, est = self._resolve_hyperparameters(Xs0, ys0, Xt0, yt0)
        self.lambda_ = float(lam)
        self.noise_source_ = float(noise_s)
        self.noise_target_ = float(noise_t)
        self.lambda_estimate_ = est

        params = self._params()
        self.X_source_ = Xs0
        self.X_target_ = Xt0
        self.n_source_ = Xs0.shape[0]
        y0 = np.concatenate([ys0, yt0])
        noise = _noise_diag(len(ys0), len(yt0), self.noise_source_, self.noise_target_)

        if self.landmarks == "exact":
            Kss = kernel_matrix(Xs0, params=params)
            Kst = kernel_matrix(Xs0, Xt0, params=params)
            Ktt = kernel_matrix(Xt0, params=params)
            K = assemble_transfer_kernel(Kss, Kst, Ktt, self.lambda_)
            self.L_, self.jitter_ = cholesky_with_jitter(K, noise)
            self.alpha_ = cho_solve((self.L_, True), y0)
            self.lml_ = lml_from_factor(self.L_, self.alpha_, y0)
        else:
            self._fit_nystrom(y0, noise, int(self.landmarks))
        return self

    # -- Nystrom path -----------------------------------------------------

    def _cross_with_stacked(self, X0):
        """Transfer cross-covariance [lambda K(Xs, X); K(Xt, X)].

        Rows follow the stacked training order; covariances to source
        rows carry the lambda factor because query points live in the
        target task.
        """
        params = self._params()
        top = self.lambda_ * kernel_matrix(self.X_source_, X0, params=params)
        bottom = kernel_matrix(self.X_target_, X0, params=params)
        return np.vstack([top, bottom])

    def _landmark_columns(self, idx):
        """Transfer-kernel columns K[:, idx] without forming the full K."""
        params = self._params()
        stacked = np.vstack([self.X_source_, self.X_target_])
        base = kernel_matrix(stacked, stacked[idx], params=params)
        is_source = np.arange(stacked.shape[0]) < self.n_source_
        cross_task = is_source[:, None] != is_source[idx][None, :]
        return np.where(cross_task, self.lambda_ * base, base)

    def _fit_nystrom(self, y0, noise, m):
        n = self.n_source_ + self.X_target_.shape[0]
        if not 1 <= m <= n:
            raise ValueError(f"landmark count must lie in [1, {n}], got {m}")
        rng = np.random.default_rng(self.landmark_seed)
        idx = np.sort(rng.choice(n, size=m, replace=False))
        self.landmark_idx_ = idx

        C = self._landmark_columns(idx)
        W = C[idx]
        eigvals, eigvecs = np.linalg.eigh((W + W.T) / 2.0)
        keep = eigvals > EIGEN_FLOOR
        if not np.any(keep):
            raise ValueError("landmark kernel block is numerically zero")
        # K ~= C W^+ C^T = Z Z^T with Z = C V diag(eig^-1/2)
        Z = C @ (eigvecs[:, keep] / np.sqrt(eigvals[keep]))
        d_inv = 1.0 / (noise + JITTER_START)
        M = Z.T @ (d_inv[:, None] * Z)
        M[np.diag_indices_from(M)] += 1.0
        self.Z_ = Z
        self.d_inv_ = d_inv
        self.M_factor_ = cho_factor(M, lower=True)
        # Woodbury: (Z Z^T + D)^-1 y = D^-1 y - D^-1 Z M^-1 Z^T D^-1 y
        dy = d_inv * y0
        self.alpha_ = dy - d_inv * (Z @ cho_solve(self.M_factor_, Z.T @ dy))

    def _woodbury_inverse_apply(self, B):
        """(K_hat + D)^{-1} B for an n x k right-hand side."""
        dB = self.d_inv_[:, None] * B
        return dB - self.d_inv_[:, None] * (
            self.Z_ @ cho_solve(self.M_factor_, self.Z_.T @ dB)
        )

    def predict(self, X, return_var=False):
        """Posterior mean (and optionally variance) at target-task points."""
        if not hasattr(self, "alpha_"):
            raise RuntimeError("model is not fitted")
        X = as_float_matrix(X)
        if X.shape[1] != self.X_target_.shape[1]:
            raise ValueError(
                f"X has {X.shape[1]} features, model expects {self.X_target_.shape[1]}"
            )
        X0 = self.scaler_.transform(X) if self.scaler_ else X
        cross = self._cross_with_stacked(X0)
        mean0 = cross.T @ self.alpha_
        mean = self.scaler_.inverse_labels(mean0) if self.scaler_ else mean0
        if not return_var:
            return mean
        prior = kernel_diag(X0, self._params())
        if self.landmarks == "exact":
            v = solve_triangular(self.L_, cross, lower=True)
            var0 = prior - np.einsum("ij,ij->j", v, v)
        else:
            var0 = prior - np.einsum(
                "ij,ij->j", cross, self._woodbury_inverse_apply(cross)
            )
        var0 = np.maximum(var0, 0.0)
        if self.scaler_:
            var0 = var0 * self.scaler_.label_std**2
        return mean, var0


def nystrom_frobenius_error(Kss, Kst, Ktt, lam, m, seed):
    """Relative Frobenius error of the rank-m landmark approximation.

    Diagnostic used to study how approximation quality scales with the
    landmark count; compares against the exactly assembled kernel.
    """
    K = assemble_transfer_kernel(Kss, Kst, Ktt, lam)
    n = K.shape[0]
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=m, replace=False))
    C = K[:, idx]
    W = K[np.ix_(idx, idx)]
    eigvals, eigvecs = np.linalg.eigh((W + W.T) / 2.0)
    keep = eigvals > EIGEN_FLOOR
    if not np.any(keep):
        return 1.0
    Z = C @ (eigvecs[:, keep] / np.sqrt(eigvals[keep]))
    approx = Z @ Z.T
    return float(np.linalg.norm(K - approx) / np.linalg.norm(K))
