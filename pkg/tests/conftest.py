import numpy as np
import pytest

from vedflow.dataset import generate_dataset
from vedflow.grid import irregular_grid
from vedflow.kle import KernelConfig, build_kle


@pytest.fixture(scope="session")
def tiny_grid():
    """Small irregular grid shared by the fast unit tests."""
    return irregular_grid(12, 10, seed=5)


@pytest.fixture(scope="session")
def tiny_kle(tiny_grid):
    return build_kle(tiny_grid, KernelConfig(variance=1.0, length_scale=2.0), tiny_grid.n_active)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_grid, tiny_kle):
    return generate_dataset(
        tiny_grid, tiny_kle, n_samples=240, n_wells=8, seed=21, train_fraction=0.75
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
