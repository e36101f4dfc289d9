"""Truncated Karhunen-Loeve sampler for Gaussian log-transmissivity fields.

The covariance is a squared-exponential kernel over active-cell centers; its
top eigenpairs give a K-dimensional sampler of correlated fields:

    field = mean + sum_k sqrt(eigenvalue_k) * xi_k * mode_k,  xi ~ N(0, I_K).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DecompositionError, DimensionError, ConfigurationError
from .grid import FlowGrid


@dataclass(frozen=True)
class KernelConfig:
    """Squared-exponential covariance: variance * exp(-0.5 * d^2 / length_scale^2)."""

    variance: float = 1.0
    length_scale: float = 1.0

    def __post_init__(self):
        if self.variance <= 0 or self.length_scale <= 0:
            raise ConfigurationError("kernel variance and length_scale must be positive")

    def to_dict(self) -> dict:
        return {"variance": self.variance, "length_scale": self.length_scale}


@dataclass(frozen=True)
class KLEBasis:
    """Top-K eigenpairs of the field covariance.

    Attributes:
        eigenvalues: (K,) non-negative, non-increasing.
        modes: (K, n) orthonormal spatial modes, one per row.
        mean_field: (n,) mean of the log-transmissivity field.
    """

    eigenvalues: np.ndarray
    modes: np.ndarray
    mean_field: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_cells(self) -> int:
        return self.modes.shape[1]


def kernel_matrix(coords: np.ndarray, kernel: KernelConfig) -> np.ndarray:
    """Dense covariance of the field over the given (n, 2) cell centers."""
    diff = coords[:, None, :] - coords[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    return kernel.variance * np.exp(-0.5 * d2 / kernel.length_scale**2)


def build_kle(grid: FlowGrid, kernel: KernelConfig, n_modes: int) -> KLEBasis:
    """Top ``n_modes`` eigenpairs of the squared-exponential covariance.

    Raises:
        DimensionError: if n_modes exceeds the number of active cells.
        DecompositionError: if the eigensolve fails or returns eigenvalues
            negative beyond roundoff (covariance not numerically PSD).
    """
    n = grid.n_active
    if n_modes > n:
        raise DimensionError(f"n_modes = {n_modes} exceeds active cell count n = {n}")
    if n_modes < 1:
        raise DimensionError("n_modes must be >= 1")
    cov = kernel_matrix(grid.cell_centers(), kernel)
    try:
        vals, vecs = scipy.linalg.eigh(cov, subset_by_index=[n - n_modes, n - 1])
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise DecompositionError(f"covariance eigendecomposition failed: {exc}") from exc
    # eigh returns ascending order; flip to non-increasing.
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1]
    scale = max(abs(vals[0]), 1.0)
    if vals[-1] < -1e-10 * scale:
        raise DecompositionError(
            "covariance is not numerically positive semi-definite: "
            f"min eigenvalue {vals[-1]:.3e}, max {vals[0]:.3e} "
            f"(ratio {vals[-1] / scale:.3e})"
        )
    np.clip(vals, 0.0, None, out=vals)
    return KLEBasis(eigenvalues=vals, modes=np.ascontiguousarray(vecs.T), mean_field=np.zeros(n))


def sample_log_transmissivity(kle: KLEBasis, rng: np.random.Generator) -> np.ndarray:
    """One field draw; deterministic given the generator state."""
    xi = rng.standard_normal(kle.n_modes)
    return kle.mean_field + (np.sqrt(kle.eigenvalues) * xi) @ kle.modes


def sample_fields(kle: KLEBasis, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, n) independent field draws from one generator."""
    xi = rng.standard_normal((count, kle.n_modes))
    return kle.mean_field + (xi * np.sqrt(kle.eigenvalues)) @ kle.modes
