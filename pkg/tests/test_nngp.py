import numpy as np
import pytest
from scipy.linalg import cho_solve

from spectrait.nngp import (
    KernelNotPsdError,
    NngpGpRegressor,
    NngpParams,
    cholesky_with_jitter,
    kernel_diag,
    kernel_entry,
    kernel_matrix,
    lml_from_factor,
    log_marginal_likelihood,
    select_noise,
)

from oracles import dense_log_marginal_likelihood, finite_width_kernel_mc


def standardized(X):
    return (X - X.mean(axis=0)) / np.maximum(X.std(axis=0), 1e-12)


class TestKernelEntry:
    def test_hand_recursion_at_origin(self):
        # zero inputs: K0 = 0.1; theta = 0 so the angular term is pi,
        # giving K1 = 0.1 + 2 * (0.1 / 2) = 0.2
        p = NngpParams(depth=1, sigma_w2=2.0, sigma_b2=0.1)
        x = np.zeros(3)
        assert kernel_entry(x, x, p) == pytest.approx(0.2, abs=1e-14)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(0)
        p = NngpParams()
        for _ in range(5):
            a, b = rng.normal(size=7), rng.normal(size=7)
            assert kernel_entry(a, b, p) == kernel_entry(b, a, p)

    def test_zero_weight_variance_collapses(self):
        rng = np.random.default_rng(1)
        for depth in (1, 2, 4):
            p = NngpParams(depth=depth, sigma_w2=0.0, sigma_b2=0.3)
            a, b = rng.normal(size=4), rng.normal(size=4)
            assert kernel_entry(a, b, p) == pytest.approx(0.3, abs=1e-15)

    def test_self_kernel_positive(self):
        rng = np.random.default_rng(2)
        p = NngpParams()
        for _ in range(10):
            x = rng.normal(size=5)
            assert kernel_entry(x, x, p) > 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            kernel_entry(np.zeros(3), np.zeros(4), NngpParams())


class TestKernelMatrix:
    def test_matches_scalar_path(self):
        rng = np.random.default_rng(3)
        A = standardized(rng.normal(size=(6, 3)))
        p = NngpParams(depth=3)
        K = kernel_matrix(A, params=p)
        for i in range(6):
            for j in range(6):
                assert K[i, j] == pytest.approx(
                    kernel_entry(A[i], A[j], p), abs=1e-12
                )

    def test_cross_block_matches_scalar_path(self):
        rng = np.random.default_rng(4)
        A = standardized(rng.normal(size=(5, 4)))
        B = standardized(rng.normal(size=(3, 4)))
        p = NngpParams(depth=2)
        K = kernel_matrix(A, B, p)
        assert K.shape == (5, 3)
        for i in range(5):
            for j in range(3):
                assert K[i, j] == pytest.approx(
                    kernel_entry(A[i], B[j], p), abs=1e-12
                )

    def test_single_entry_consistency(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(1, 4))
        b = rng.normal(size=(1, 4))
        p = NngpParams()
        assert kernel_matrix(a, b, p)[0, 0] == pytest.approx(
            kernel_entry(a[0], b[0], p), abs=1e-14
        )

    def test_symmetric_and_numerically_psd(self):
        rng = np.random.default_rng(6)
        for n in (20, 200):
            A = standardized(rng.normal(size=(n, 8)))
            K = kernel_matrix(A, params=NngpParams())
            np.testing.assert_array_equal(K, K.T)
            eig = np.linalg.eigvalsh((K + K.T) / 2.0)
            assert eig.min() >= -1e-8

    def test_block_of_stacked_matrix_is_bit_identical(self):
        rng = np.random.default_rng(7)
        X = standardized(rng.normal(size=(12, 5)))
        p = NngpParams()
        full = kernel_matrix(X, params=p)
        np.testing.assert_array_equal(full[:5, :5], kernel_matrix(X[:5], params=p))
        np.testing.assert_array_equal(full[:5, 5:], kernel_matrix(X[:5], X[5:], p))

    def test_diag_matches_matrix(self):
        rng = np.random.default_rng(8)
        A = standardized(rng.normal(size=(9, 4)))
        p = NngpParams(depth=2)
        np.testing.assert_allclose(
            kernel_diag(A, p), np.diag(kernel_matrix(A, params=p)), atol=1e-12
        )


class TestFiniteWidthAgreement:
    def test_quick_monte_carlo_agreement(self):
        # desk-scale version of the full acceptance check
        rng = np.random.default_rng(9)
        X1 = standardized(rng.normal(size=(8, 6)))[:2]
        X2 = standardized(rng.normal(size=(8, 6)))[:2]
        mc = finite_width_kernel_mc(X1, X2, depth=2, sigma_w2=1.6, sigma_b2=0.1,
                                    width=2048, n_networks=4000, seed=0)
        for depth in (1, 2):
            p = NngpParams(depth=depth)
            for pair in range(2):
                exact = kernel_entry(X1[pair], X2[pair], p)
                assert mc[depth - 1, pair] == pytest.approx(exact, rel=0.05)


class TestGpCore:
    def test_scalar_solve(self):
        K = np.array([[2.0]])
        L, jitter = cholesky_with_jitter(K, 0.5)
        alpha = cho_solve((L, True), np.array([3.0]))
        assert alpha[0] == pytest.approx(3.0 / (2.0 + 0.5 + jitter), rel=1e-12)

    def test_identity_kernel_stub(self):
        y = np.array([1.0, -2.0, 0.5])
        L, _ = cholesky_with_jitter(np.eye(3), 0.25)
        alpha = cho_solve((L, True), y)
        np.testing.assert_allclose(alpha, y / 1.25, atol=1e-9)

    def test_jitter_escalation_repairs(self):
        # rank-one kernel is singular; jitter must repair it
        v = np.ones(4)
        K = np.outer(v, v)
        L, jitter = cholesky_with_jitter(K, 0.0)
        assert jitter <= 1e-4
        assert np.all(np.diag(L) > 0)

    def test_unrepairable_raises(self):
        K = -np.eye(3)
        with pytest.raises(KernelNotPsdError, match="kernel not PSD at jitter 0.0001"):
            cholesky_with_jitter(K, 0.0)


class TestLogMarginalLikelihood:
    def test_standard_normal_at_zero(self):
        X = np.zeros((1, 2))
        p = NngpParams(depth=1, sigma_w2=0.0, sigma_b2=1.0)  # K = [[1]]
        lml = log_marginal_likelihood(X, np.array([0.0]), p, 0.0)
        assert lml == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-6)

    def test_standard_normal_at_one(self):
        X = np.zeros((1, 2))
        p = NngpParams(depth=1, sigma_w2=0.0, sigma_b2=1.0)
        lml = log_marginal_likelihood(X, np.array([1.0]), p, 0.0)
        assert lml == pytest.approx(-0.5 - 0.5 * np.log(2 * np.pi), abs=1e-6)

    def test_matches_dense_inverse_oracle(self):
        rng = np.random.default_rng(10)
        for trial in range(5):
            B = rng.normal(size=(5, 5))
            K = B @ B.T + 0.5 * np.eye(5)
            y = rng.normal(size=5)
            noise = 0.3
            L, jitter = cholesky_with_jitter(K, noise)
            alpha = cho_solve((L, True), y)
            ours = lml_from_factor(L, alpha, y)
            oracle = dense_log_marginal_likelihood(K + jitter * np.eye(5), y, noise)
            assert ours == pytest.approx(oracle, abs=1e-8)


class TestSelectNoise:
    def test_single_candidate(self):
        rng = np.random.default_rng(11)
        X = standardized(rng.normal(size=(10, 3)))
        y = rng.normal(size=10)
        assert select_noise(X, y, NngpParams(), [0.37]) == 0.37

    def test_recovers_known_noise(self):
        # labels drawn from the model itself with noise 0.1
        p = NngpParams()
        hits = 0
        for seed in range(10):
            rng = np.random.default_rng(200 + seed)
            X = standardized(rng.normal(size=(200, 6)))
            K = kernel_matrix(X, params=p)
            L, _ = cholesky_with_jitter(K, 0.0)
            f = L @ rng.normal(size=200)
            y = f + np.sqrt(0.1) * rng.normal(size=200)
            if select_noise(X, y, p, [0.01, 0.1, 1.0]) == 0.1:
                hits += 1
        assert hits >= 8

    def test_pure_noise_prefers_grid_maximum(self):
        p = NngpParams()
        hits = 0
        for seed in range(10):
            rng = np.random.default_rng(300 + seed)
            X = standardized(rng.normal(size=(200, 6)))
            y = rng.normal(size=200)
            if select_noise(X, y, p, [0.01, 0.1, 1.0]) == 1.0:
                hits += 1
        assert hits >= 8


class TestNngpGpRegressor:
    def _data(self, n=30, d=5, seed=12):
        rng = np.random.default_rng(seed)
        X = rng.uniform(0.0, 1.0, size=(n, d))
        y = 3.0 * np.sin(4.0 * X[:, 0]) + X[:, 1] + 0.01 * rng.normal(size=n)
        return X, y

    def test_noiseless_interpolation(self):
        X, y = self._data()
        gp = NngpGpRegressor(noise=0.0).fit(X, y)
        mean, var = gp.predict(X, return_var=True)
        label_scale = y.std()
        np.testing.assert_allclose(mean, y, atol=1e-6 * label_scale)
        assert var.max() <= 1e-6 * label_scale**2

    def test_variance_bounded_by_prior(self):
        X, y = self._data()
        gp = NngpGpRegressor(noise=0.05).fit(X, y)
        rng = np.random.default_rng(13)
        X_new = rng.uniform(0.0, 1.0, size=(40, 5))
        _, var = gp.predict(X_new, return_var=True)
        X0 = gp.scaler_.transform(X_new)
        prior = kernel_diag(X0, gp._params()) * gp.scaler_.label_std**2
        assert np.all(var >= 0.0)
        assert np.all(var <= prior + 1e-10)

    def test_empty_prediction(self):
        X, y = self._data()
        gp = NngpGpRegressor(noise=0.1).fit(X, y)
        mean, var = gp.predict(np.zeros((0, 5)), return_var=True)
        assert mean.shape == (0,)
        assert var.shape == (0,)

    def test_noise_grid_selection_stored(self):
        X, y = self._data(n=40)
        gp = NngpGpRegressor(noise="grid", noise_grid=[0.01, 0.1]).fit(X, y)
        assert gp.noise_ in (0.01, 0.1)

    def test_single_training_point(self):
        gp = NngpGpRegressor(noise=0.1).fit(np.array([[0.2, 0.4]]), np.array([5.0]))
        pred = gp.predict(np.array([[0.2, 0.4]]))
        assert np.isfinite(pred[0])
