import numpy as np
import pytest

from spectrait.mlp import MlpRegressor
from spectrait.model_io import MAGIC, load_model, model_kind, save_model
from spectrait.nngp import NngpGpRegressor
from spectrait.plsr import PlsrRegressor
from spectrait.simulator import default_config, generate, replace_seed
from spectrait.transfer import TransferGpRegressor


@pytest.fixture(scope="module")
def data():
    cfg = default_config()
    target = generate(replace_seed(cfg, 1), 40)
    source = generate(replace_seed(cfg, 2), 50)
    query = generate(replace_seed(cfg, 3), 7)
    return source, target, query


def roundtrip(tmp_path, model, X):
    path = tmp_path / "model.bin"
    save_model(path, model)
    loaded = load_model(path)
    np.testing.assert_array_equal(loaded.predict(X), model.predict(X))
    return loaded


class TestRoundTrips:
    def test_plsr(self, tmp_path, data):
        _, target, query = data
        model = PlsrRegressor(n_components=4).fit(target.X, target.y)
        loaded = roundtrip(tmp_path, model, query.X)
        assert model_kind(tmp_path / "model.bin") == "plsr"
        assert loaded.n_components == 4

    def test_mlp(self, tmp_path, data):
        _, target, query = data
        model = MlpRegressor(hidden=(8, 4), max_epochs=20, seed=1).fit(
            target.X, target.y
        )
        loaded = roundtrip(tmp_path, model, query.X)
        assert [w.shape for w in loaded.weights_] == [w.shape for w in model.weights_]

    def test_nngp(self, tmp_path, data):
        _, target, query = data
        model = NngpGpRegressor(noise=0.05).fit(target.X, target.y)
        loaded = roundtrip(tmp_path, model, query.X)
        assert loaded.noise_ == model.noise_
        # variance path as well
        _, v1 = model.predict(query.X, return_var=True)
        _, v2 = loaded.predict(query.X, return_var=True)
        np.testing.assert_array_equal(v1, v2)

    def test_transfer_exact(self, tmp_path, data):
        source, target, query = data
        model = TransferGpRegressor(lam="auto", noise=0.05,
                                    lambda_grid=[0.0, 0.5, 1.0])
        model.fit(source.X, source.y, target.X, target.y)
        loaded = roundtrip(tmp_path, model, query.X)
        assert loaded.lambda_ == model.lambda_
        np.testing.assert_array_equal(loaded.lambda_estimate_.grid,
                                      model.lambda_estimate_.grid)

    def test_transfer_nystrom(self, tmp_path, data):
        source, target, query = data
        model = TransferGpRegressor(lam=0.5, noise=0.1, landmarks=20,
                                    landmark_seed=3)
        model.fit(source.X, source.y, target.X, target.y)
        loaded = roundtrip(tmp_path, model, query.X)
        np.testing.assert_array_equal(loaded.landmark_idx_, model.landmark_idx_)


class TestFormat:
    def test_magic_enforced(self, tmp_path):
        path = tmp_path / "bogus.bin"
        path.write_bytes(b"not a model file at all")
        with pytest.raises(ValueError, match="not a spectrait model"):
            load_model(path)

    def test_magic_prefix(self, tmp_path, data):
        _, target, _ = data
        path = tmp_path / "model.bin"
        save_model(path, PlsrRegressor(n_components=2).fit(target.X, target.y))
        assert path.read_bytes()[: len(MAGIC)] == MAGIC

    def test_unfitted_model_rejected(self, tmp_path):
        with pytest.raises(AttributeError):
            save_model(tmp_path / "x.bin", PlsrRegressor())
