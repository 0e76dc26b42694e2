"""Finite-width feedforward regressor with a pretrain/fine-tune path.

Plain numpy implementation: ReLU hidden layers, linear output head, mean
squared error minimized by seeded mini-batch gradient descent with
adaptive moment estimation. Weights initialize with variance
sigma_w^2 / fan_in and biases with variance sigma_b^2, the same
parameterization the infinite-width kernel uses, so finite- and
infinite-width models are directly comparable.

Training is single-threaded and deterministic per seed: the validation
split, the initialization draws and every epoch's batch order all come
from one seeded generator.
"""

import copy

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .data import Scaler
from .validation import as_float_matrix, as_float_vector, check_same_rows

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the last epoch that was finite."""

    def __init__(self, epoch, last_finite_epoch):
        super().__init__(
            f"training loss became non-finite at epoch {epoch}; "
            f"last finite epoch was {last_finite_epoch}"
        )
        self.last_finite_epoch = last_finite_epoch


def init_params(widths, seed, sigma_w2=1.6, sigma_b2=0.1):
    """Draw weights/biases for the layer widths [d, h1, ..., hL, 1]."""
    if len(widths) < 3:
        raise ValueError("architecture needs at least one hidden layer")
    if any(w < 1 for w in widths):
        raise ValueError("all layer widths must be >= 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, np.sqrt(sigma_w2 / fan_in), (fan_out, fan_in)))
        biases.append(rng.normal(0.0, np.sqrt(sigma_b2), fan_out))
    return weights, biases


def forward(weights, biases, X):
    """Pure forward pass; returns the (m,) output vector."""
    A = as_float_matrix(X)
    if A.shape[1] != weights[0].shape[1]:
        raise ValueError(
            f"input has {A.shape[1]} features, network expects {weights[0].shape[1]}"
        )
    for W, b in zip(weights[:-1], biases[:-1]):
        A = np.maximum(A @ W.T + b, 0.0)
    return (A @ weights[-1].T + biases[-1])[:, 0]


def loss_and_grads(weights, biases, X, y):
    """MSE loss and its gradients for one batch."""
    m = X.shape[0]
    activations = [X]
    pre = []
    A = X
    for W, b in zip(weights[:-1], biases[:-1]):
        Z = A @ W.T + b
        pre.append(Z)
        A = np.maximum(Z, 0.0)
        activations.append(A)
    out = (A @ weights[-1].T + biases[-1])[:, 0]
    resid = out - y
    loss = float(np.mean(resid**2))

    delta = (2.0 / m) * resid[:, None]
    g_w = [None] * len(weights)
    g_b = [None] * len(biases)
    g_w[-1] = delta.T @ activations[-1]
    g_b[-1] = delta.sum(axis=0)
    d_act = delta @ weights[-1]
    for layer in range(len(weights) - 2, -1, -1):
        d_pre = d_act * (pre[layer] > 0.0)
        g_w[layer] = d_pre.T @ activations[layer]
        g_b[layer] = d_pre.sum(axis=0)
        if layer > 0:
            d_act = d_pre @ weights[layer]
    return loss, g_w, g_b


class _Adam:
    """Adaptive moment estimation over a flat list of parameter arrays."""

    def __init__(self, params, learning_rate):
        self.lr = learning_rate
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, frozen=None):
        self.t += 1
        correct1 = 1.0 - ADAM_BETA1**self.t
        correct2 = 1.0 - ADAM_BETA2**self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            if frozen is not None and frozen[i]:
                continue
            self.m[i] = ADAM_BETA1 * self.m[i] + (1 - ADAM_BETA1) * g
            self.v[i] = ADAM_BETA2 * self.v[i] + (1 - ADAM_BETA2) * g**2
            p -= self.lr * (self.m[i] / correct1) / (
                np.sqrt(self.v[i] / correct2) + ADAM_EPS
            )


def _epoch(weights, biases, X, y, batch_size, rng, optimizer, frozen=None):
    """One pass of shuffled mini-batch updates; returns mean batch loss."""
    n = X.shape[0]
    order = rng.permutation(n)
    losses = []
    params = weights + biases
    frozen_mask = None
    if frozen is not None:
        frozen_mask = list(frozen) + list(frozen)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        loss, g_w, g_b = loss_and_grads(weights, biases, X[idx], y[idx])
        losses.append(loss)
        optimizer.step(params, g_w + g_b, frozen_mask)
    return float(np.mean(losses))


class MlpRegressor(RegressorMixin, BaseEstimator):
    """Feedforward ReLU network trained with early stopping.

    Parameters
    ----------
    hidden : tuple of int
        Hidden layer widths; the full architecture is [d, *hidden, 1].
    learning_rate, batch_size, max_epochs : training hyperparameters.
    patience : int
        Stop after this many epochs without validation improvement; the
        returned weights are those at the best recorded validation loss.
    validation_fraction : float
        Share of the training rows held out for early stopping. With 0,
        the training loss drives early stopping instead.
    sigma_w2, sigma_b2 : float
        Initialization variances (weights scaled by fan-in).
    seed : int
        Drives initialization, the validation split and batch shuffles.
    """

    def __init__(self, hidden=(256, 256), learning_rate=1e-3, batch_size=32,
                 max_epochs=500, patience=20, validation_fraction=0.1,
                 sigma_w2=1.6, sigma_b2=0.1, seed=0):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.sigma_w2 = sigma_w2
        self.sigma_b2 = sigma_b2
        self.seed = seed

    @property
    def widths_(self):
        return [self.weights_[0].shape[1]] + [W.shape[0] for W in self.weights_]

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_float_vector(y)
        check_same_rows(X, y)
        if X.shape[0] < 2:
            raise ValueError("need at least 2 training samples")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

        self.scaler_ = Scaler.fit(X, y)
        X0 = self.scaler_.transform(X)
        y0 = self.scaler_.transform_labels(y)

        rng = np.random.default_rng(self.seed)
        widths = [X.shape[1], *self.hidden, 1]
        weights, biases = init_params(widths, rng, self.sigma_w2, self.sigma_b2)

        n = X0.shape[0]
        n_val = int(round(self.validation_fraction * n))
        n_val = min(n_val, n - 1)
        if n_val > 0:
            perm = rng.permutation(n)
            val_idx, tr_idx = perm[:n_val], perm[n_val:]
            X_tr, y_tr = X0[tr_idx], y0[tr_idx]
            X_val, y_val = X0[val_idx], y0[val_idx]
        else:
            X_tr, y_tr = X0, y0
            X_val, y_val = X0, y0

        optimizer = _Adam(weights + biases, self.learning_rate)
        best = (np.inf, None, None)
        since_improve = 0
        log = []
        for epoch in range(1, self.max_epochs + 1):
            train_loss = _epoch(weights, biases, X_tr, y_tr,
                                self.batch_size, rng, optimizer)
            if not np.isfinite(train_loss):
                raise TrainingDivergedError(epoch, epoch - 1)
            val_loss = float(np.mean((forward(weights, biases, X_val) - y_val) ** 2))
            log.append((epoch, train_loss, val_loss))
            if val_loss < best[0]:
                best = (val_loss, copy.deepcopy(weights), copy.deepcopy(biases))
                since_improve = 0
            else:
                since_improve += 1
                if since_improve >= self.patience:
                    break

        self.weights_, self.biases_ = best[1], best[2]
        self.training_log_ = log
        self.best_val_loss_ = best[0]
        return self

    def predict(self, X):
        if not hasattr(self, "weights_"):
            raise RuntimeError("model is not fitted")
        out = forward(self.weights_, self.biases_, self.scaler_.transform(X))
        return self.scaler_.inverse_labels(out)


def fine_tune(model, X, y, freeze_layers=1, learning_rate=1e-4,
              max_epochs=200, batch_size=32, seed=0):
    """Continue training a fitted model on target-domain data.

    The first ``freeze_layers`` layers (counted from the input side)
    keep their weights bit-identical; the rest continue with fresh
    optimizer state at the fine-tune learning rate. The pretrained
    scalers are reused so frozen layers keep seeing inputs on the scale
    they were trained on. Returns a new fitted model; the input model is
    untouched. ``max_epochs=0`` returns an identical copy.
    """
    if not hasattr(model, "weights_"):
        raise ValueError("fine_tune requires a fitted model")
    X = as_float_matrix(X)
    y = as_float_vector(y)
    check_same_rows(X, y)
    if X.shape[0] < 1:
        raise ValueError("target data must be nonempty")
    n_layers = len(model.weights_)
    if not 0 <= freeze_layers < n_layers:
        raise ValueError(
            f"freeze_layers={freeze_layers} must be < layer count {n_layers}"
        )

    tuned = copy.deepcopy(model)
    weights, biases = tuned.weights_, tuned.biases_
    if max_epochs > 0:
        X0 = tuned.scaler_.transform(X)
        y0 = tuned.scaler_.transform_labels(y)
        frozen = [i < freeze_layers for i in range(n_layers)]
        rng = np.random.default_rng(seed)
        optimizer = _Adam(weights + biases, learning_rate)
        log = list(tuned.training_log_)
        for epoch in range(1, max_epochs + 1):
            train_loss = _epoch(weights, biases, X0, y0, batch_size, rng,
                                optimizer, frozen=frozen)
            if not np.isfinite(train_loss):
                raise TrainingDivergedError(epoch, epoch - 1)
            log.append((len(log) + 1, train_loss, None))
        tuned.training_log_ = log
    return tuned
