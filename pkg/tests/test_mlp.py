import numpy as np
import pytest

from spectrait.mlp import (
    MlpRegressor,
    TrainingDivergedError,
    fine_tune,
    forward,
    init_params,
    loss_and_grads,
)

from oracles import finite_difference_gradients, ols_predictions


class TestInit:
    def test_deterministic(self):
        w1, b1 = init_params([4, 8, 1], seed=5)
        w2, b2 = init_params([4, 8, 1], seed=5)
        for a, b in zip(w1 + b1, w2 + b2):
            np.testing.assert_array_equal(a, b)

    def test_shapes(self):
        weights, biases = init_params([4, 8, 1], seed=0)
        assert weights[0].shape == (8, 4)
        assert weights[1].shape == (1, 8)
        assert biases[0].shape == (8,)
        assert biases[1].shape == (1,)

    def test_requires_hidden_layer(self):
        with pytest.raises(ValueError, match="hidden layer"):
            init_params([4, 1], seed=0)

    def test_variance_scaling(self):
        weights, _ = init_params([100, 4000, 1], seed=1, sigma_w2=1.6)
        assert weights[0].var() == pytest.approx(1.6 / 100, rel=0.05)


class TestForward:
    def test_hand_computed_relu_composition(self):
        # one hidden unit: w=1, b=0, output weight 2
        weights = [np.array([[1.0]]), np.array([[2.0]])]
        biases = [np.zeros(1), np.zeros(1)]
        assert forward(weights, biases, np.array([[3.0]]))[0] == 6.0
        assert forward(weights, biases, np.array([[-3.0]]))[0] == 0.0

    def test_zero_network_outputs_bias(self):
        weights, biases = init_params([3, 5, 1], seed=0)
        weights = [np.zeros_like(w) for w in weights]
        out = forward(weights, biases, np.random.default_rng(0).normal(size=(4, 3)))
        np.testing.assert_allclose(out, biases[-1][0], atol=1e-15)

    def test_batching_purity(self):
        weights, biases = init_params([3, 6, 1], seed=2)
        rng = np.random.default_rng(1)
        A, B = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
        stacked = forward(weights, biases, np.vstack([A, B]))
        np.testing.assert_array_equal(stacked[:4], forward(weights, biases, A))
        np.testing.assert_array_equal(stacked[4:], forward(weights, biases, B))

    def test_dimension_mismatch(self):
        weights, biases = init_params([3, 6, 1], seed=2)
        with pytest.raises(ValueError, match="features"):
            forward(weights, biases, np.zeros((2, 4)))


class TestGradients:
    def test_backprop_matches_central_differences(self):
        rng = np.random.default_rng(7)
        weights, biases = init_params([3, 4, 3, 1], seed=7)
        X = rng.normal(size=(6, 3))
        y = rng.normal(size=6)

        _, g_w, g_b = loss_and_grads(weights, biases, X, y)

        def loss():
            out = forward(weights, biases, X)
            return float(np.mean((out - y) ** 2))

        fd = finite_difference_gradients(loss, weights + biases, eps=1e-5)
        for analytic, numeric in zip(g_w + g_b, fd):
            denom = np.maximum(np.abs(numeric), 1e-8)
            rel = np.abs(analytic - numeric) / denom
            assert rel.max() <= 1e-4


class TestTraining:
    def test_learns_linear_problem(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(32, 2))
        y = X[:, 0].copy()
        model = MlpRegressor(hidden=(16,), max_epochs=2000, patience=2000,
                             validation_fraction=0.0, learning_rate=1e-2,
                             seed=0).fit(X, y)
        resid = model.predict(X) - y
        assert np.sqrt(np.mean(resid**2)) < 0.05
        # sanity: OLS solves it exactly
        np.testing.assert_allclose(ols_predictions(X, y, X), y, atol=1e-10)

    def test_early_stopping_contract(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(40, 3))
        y = rng.normal(size=40)  # pure noise: validation soon stops improving
        model = MlpRegressor(hidden=(8,), max_epochs=500, patience=1,
                             learning_rate=1e-2, seed=1).fit(X, y)
        log = model.training_log_
        val = [row[2] for row in log]
        best_epoch = int(np.argmin(val)) + 1
        # stopped no later than patience epochs after the best epoch
        assert len(log) <= best_epoch + 1
        # and the kept weights achieve the minimum recorded validation loss
        assert model.best_val_loss_ == min(val)

    def test_divergence_raises(self):
        # a step size near the float64 exponent limit overflows the
        # layer products, driving the batch loss to inf/NaN
        rng = np.random.default_rng(5)
        X = rng.normal(size=(16, 2))
        y = rng.normal(size=16)
        model = MlpRegressor(hidden=(8, 8), max_epochs=5, learning_rate=1e154,
                             batch_size=8, validation_fraction=0.0, seed=0)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingDivergedError, match="last finite epoch"):
                model.fit(X, y)

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(24, 3))
        y = rng.normal(size=24)
        m1 = MlpRegressor(hidden=(8,), max_epochs=30, seed=9).fit(X, y)
        m2 = MlpRegressor(hidden=(8,), max_epochs=30, seed=9).fit(X, y)
        for a, b in zip(m1.weights_ + m1.biases_, m2.weights_ + m2.biases_):
            np.testing.assert_array_equal(a, b)


class TestFineTune:
    def _pretrained(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(40, 3))
        y = X @ np.array([1.0, -2.0, 0.5])
        return MlpRegressor(hidden=(8, 8), max_epochs=50, seed=2).fit(X, y), rng

    def test_frozen_layers_bit_identical(self):
        model, rng = self._pretrained()
        Xt = rng.normal(size=(10, 3))
        yt = rng.normal(size=10)
        tuned = fine_tune(model, Xt, yt, freeze_layers=2, max_epochs=20, seed=3)
        for i in range(2):
            assert tuned.weights_[i].tobytes() == model.weights_[i].tobytes()
            assert tuned.biases_[i].tobytes() == model.biases_[i].tobytes()
        assert not np.array_equal(tuned.weights_[2], model.weights_[2])

    def test_zero_epochs_is_identity(self):
        model, rng = self._pretrained()
        tuned = fine_tune(model, rng.normal(size=(5, 3)), rng.normal(size=5),
                          max_epochs=0)
        for a, b in zip(tuned.weights_ + tuned.biases_,
                        model.weights_ + model.biases_):
            np.testing.assert_array_equal(a, b)

    def test_input_model_untouched(self):
        model, rng = self._pretrained()
        before = [w.copy() for w in model.weights_]
        fine_tune(model, rng.normal(size=(10, 3)), rng.normal(size=10),
                  freeze_layers=0, max_epochs=10, seed=0)
        for w, snap in zip(model.weights_, before):
            np.testing.assert_array_equal(w, snap)

    def test_all_layers_frozen_rejected(self):
        model, rng = self._pretrained()
        with pytest.raises(ValueError, match="freeze_layers"):
            fine_tune(model, rng.normal(size=(5, 3)), rng.normal(size=5),
                      freeze_layers=3)

    def test_related_source_beats_scratch_at_small_n(self):
        # source and target share the data-generating process; with only a
        # handful of target samples the pretrained start should not lose,
        # on average over seeds
        gains = []
        for seed in range(5):
            rng = np.random.default_rng(40 + seed)
            beta = np.array([1.5, -1.0, 0.5, 0.25])
            X_src = rng.normal(size=(400, 4))
            y_src = X_src @ beta + 0.05 * rng.normal(size=400)
            X_tr = rng.normal(size=(12, 4))
            y_tr = X_tr @ beta + 0.05 * rng.normal(size=12)
            X_te = rng.normal(size=(200, 4))
            y_te = X_te @ beta

            pre = MlpRegressor(hidden=(16, 16), max_epochs=150, seed=seed).fit(
                X_src, y_src
            )
            tuned = fine_tune(pre, X_tr, y_tr, freeze_layers=1,
                              max_epochs=100, seed=seed)
            scratch = MlpRegressor(hidden=(16, 16), max_epochs=150,
                                   seed=seed).fit(X_tr, y_tr)
            rmse_tuned = np.sqrt(np.mean((tuned.predict(X_te) - y_te) ** 2))
            rmse_scratch = np.sqrt(np.mean((scratch.predict(X_te) - y_te) ** 2))
            gains.append(rmse_scratch - rmse_tuned)
        assert np.mean(gains) >= 0.0
