import numpy as np
import pytest

from vedflow.errors import DimensionError
from vedflow.kle import (
    KernelConfig,
    build_kle,
    kernel_matrix,
    sample_fields,
    sample_log_transmissivity,
)
from vedflow.grid import rectangular_grid


class _ZeroDraws:
    """Generator stand-in forcing all KL coefficients to zero."""

    def standard_normal(self, shape):
        return np.zeros(shape)


def test_trace_preserved_at_full_truncation():
    g = rectangular_grid(5, 5)
    kernel = KernelConfig(variance=1.7, length_scale=1.3)
    kle = build_kle(g, kernel, g.n_active)
    assert abs(kle.eigenvalues.sum() - g.n_active * kernel.variance) < 1e-6


def test_infinite_length_scale_is_rank_one():
    g = rectangular_grid(4, 4)
    kle = build_kle(g, KernelConfig(variance=1.0, length_scale=1e6), g.n_active)
    total = g.n_active * 1.0
    assert abs(kle.eigenvalues[0] - total) / total < 1e-6
    assert kle.eigenvalues[1:].max() < 1e-6 * total


def test_eigenpairs_match_dense_oracle():
    g = rectangular_grid(6, 6)
    kernel = KernelConfig(variance=1.0, length_scale=2.0)
    kle = build_kle(g, kernel, 10)
    cov = kernel_matrix(g.cell_centers(), kernel)
    oracle_vals = np.linalg.eigvalsh(cov)[::-1][:10]
    np.testing.assert_allclose(kle.eigenvalues, oracle_vals, atol=1e-8)
    # Eigenpair property holds mode by mode (robust to degenerate pairs).
    for k in range(10):
        residual = cov @ kle.modes[k] - kle.eigenvalues[k] * kle.modes[k]
        assert np.abs(residual).max() < 1e-8


def test_modes_orthonormal_and_sorted(tiny_kle):
    gram = tiny_kle.modes @ tiny_kle.modes.T
    assert np.abs(gram - np.eye(tiny_kle.n_modes)).max() < 1e-8
    assert np.all(np.diff(tiny_kle.eigenvalues) <= 1e-12)
    assert tiny_kle.eigenvalues.min() >= 0.0


def test_zero_coefficients_return_mean_field(tiny_kle):
    field = sample_log_transmissivity(tiny_kle, _ZeroDraws())
    np.testing.assert_array_equal(field, tiny_kle.mean_field)


def test_sampling_deterministic(tiny_kle):
    f1 = sample_log_transmissivity(tiny_kle, np.random.default_rng(77))
    f2 = sample_log_transmissivity(tiny_kle, np.random.default_rng(77))
    np.testing.assert_array_equal(f1, f2)


def test_empirical_covariance_matches_kernel():
    g = rectangular_grid(5, 5)
    kernel = KernelConfig(variance=1.0, length_scale=1.5)
    kle = build_kle(g, kernel, g.n_active)
    draws = sample_fields(kle, 200_000, np.random.default_rng(4242))
    centered = draws - draws.mean(axis=0)
    empirical = centered.T @ centered / draws.shape[0]
    expected = kernel_matrix(g.cell_centers(), kernel)
    assert np.abs(empirical - expected).max() < 0.02


def test_truncation_bounds():
    g = rectangular_grid(3, 3)
    with pytest.raises(DimensionError):
        build_kle(g, KernelConfig(), g.n_active + 1)
    with pytest.raises(DimensionError):
        build_kle(g, KernelConfig(), 0)
