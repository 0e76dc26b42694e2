import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spectrait.data import Domain, LabeledDataset, WavelengthGrid


@pytest.fixture
def tiny_grid():
    return WavelengthGrid(np.array([400.0, 410.0, 420.0]))


def make_dataset(n=20, d=5, seed=0, domain=Domain.TARGET):
    """Random standardizable dataset on an arbitrary small grid."""
    rng = np.random.default_rng(seed)
    grid = WavelengthGrid(400.0 + 10.0 * np.arange(d))
    X = rng.uniform(0.05, 0.95, size=(n, d))
    y = rng.uniform(10.0, 80.0, size=n)
    return LabeledDataset(grid, X, y, domain)


@pytest.fixture
def random_dataset():
    return make_dataset()
