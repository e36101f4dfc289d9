"""Linear latent-dimension estimation via canonical correlation analysis.

Solves the ridge-regularized generalized eigenproblem

    S_XY inv(S_YY) S_YX a = s^2 (S_XX + eps I) a

by Cholesky reduction to a symmetric standard problem, then ranks latent
directions by the cumulative output variance they explain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DecompositionError, DegenerateDataError, StatisticsError


@dataclass(frozen=True)
class CCAResult:
    """Ordered eigenpairs and explained-variance bookkeeping.

    Attributes:
        corr_sq: (k,) generalized eigenvalues s^2, non-increasing.
        weights: (n, k) input projection vectors, columns normalized so that
            a^T (S_XX + eps I) a = 1.
        loadings: (m, k) projected cross-covariance S_YX @ weights.
        cev: (k,) truncated explained output variance, cumulative over
            leading directions (un-normalized).
        eps_x: ridge added to S_XX.
        eps_y: ridge added to S_YY before inversion.
        total_output_variance: trace of S_YY, for the explained-fraction
            diagnostic.
    """

    corr_sq: np.ndarray
    weights: np.ndarray
    loadings: np.ndarray
    cev: np.ndarray
    eps_x: float
    eps_y: float
    total_output_variance: float

    @property
    def k(self) -> int:
        return self.corr_sq.shape[0]

    @property
    def explained_variance_ratio(self) -> float:
        """Fraction of total output variance the linear encoding captures."""
        return float(self.cev[-1] / self.total_output_variance)


def fit_cca(x: np.ndarray, y: np.ndarray, eps: float | None = None) -> CCAResult:
    """Fit CCA on paired samples (rows) with ridge regularization.

    Sample covariances are mean-centered with divisor N-1. ``eps`` defaults to
    the scale-aware 1e-6 * trace(S_XX) / n; a small fixed ridge
    1e-10 * trace(S_YY) / m is always added to S_YY before inversion.

    Raises:
        StatisticsError: fewer than two samples.
        DecompositionError: S_YY not positive definite even after its ridge.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_samples = x.shape[0]
    if n_samples <= 1 or y.shape[0] != n_samples:
        raise StatisticsError(
            f"need at least 2 paired samples, got x: {x.shape}, y: {y.shape}"
        )
    n, m = x.shape[1], y.shape[1]
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    sxx = xc.T @ xc / (n_samples - 1)
    syy = yc.T @ yc / (n_samples - 1)
    sxy = xc.T @ yc / (n_samples - 1)

    if eps is None:
        eps = 1e-6 * np.trace(sxx) / n
    if eps < 0:
        raise ValueError("eps must be non-negative")
    eps_y = 1e-10 * np.trace(syy) / m

    try:
        syy_chol = scipy.linalg.cho_factor(syy + eps_y * np.eye(m), lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise DecompositionError(
            f"S_YY is singular even with ridge {eps_y:.3e}; "
            f"trace = {np.trace(syy):.3e}, min diagonal = {syy.diagonal().min():.3e}"
        ) from exc
    # M = S_XY inv(S_YY) S_YX, symmetric PSD of rank <= m.
    gram = sxy @ scipy.linalg.cho_solve(syy_chol, sxy.T)
    gram = 0.5 * (gram + gram.T)

    bmat = sxx + eps * np.eye(n)
    try:
        l_factor = scipy.linalg.cholesky(bmat, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise DecompositionError(
            f"S_XX + eps I is not positive definite (eps = {eps:.3e}); "
            "increase the ridge"
        ) from exc
    # Reduce to the symmetric standard problem W = inv(L) M inv(L)^T.
    half = scipy.linalg.solve_triangular(l_factor, gram, lower=True)
    w = scipy.linalg.solve_triangular(l_factor, half.T, lower=True)
    w = 0.5 * (w + w.T)
    vals, vecs = scipy.linalg.eigh(w)

    k = min(n, m)
    order = np.argsort(vals)[::-1][:k]
    corr_sq = vals[order]
    # Back-substitute: a = inv(L)^T v keeps a^T B a = v^T v = 1.
    weights = scipy.linalg.solve_triangular(l_factor, vecs[:, order], trans="T", lower=True)
    loadings = sxy.T @ weights
    cev = np.cumsum(np.sum(loadings * loadings, axis=0))
    return CCAResult(
        corr_sq=corr_sq,
        weights=weights,
        loadings=loadings,
        cev=cev,
        eps_x=float(eps),
        eps_y=float(eps_y),
        total_output_variance=float(np.trace(syy)),
    )


def cev_curve(res: CCAResult) -> np.ndarray:
    """Cumulative explained variance normalized by its final value.

    Non-decreasing, in [0, 1], with the last entry exactly 1.

    Raises:
        DegenerateDataError: total explained variance is zero.
    """
    total = res.cev[-1]
    if total <= 0:
        raise DegenerateDataError("zero explained variance; outputs carry no linear signal")
    return res.cev / total


def latent_dim_for_threshold(res: CCAResult, tau: float) -> int:
    """Smallest i (1-based) whose normalized CEV reaches ``tau``."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    curve = cev_curve(res)
    return int(np.searchsorted(curve, tau, side="left")) + 1


def standardize(
    train: np.ndarray, *others: np.ndarray
) -> tuple[np.ndarray, ...]:
    """Zero-mean unit-variance scaling fit on ``train``, applied to all inputs."""
    mean = train.mean(axis=0)
    std = np.maximum(train.std(axis=0), 1e-12)
    return tuple((arr - mean) / std for arr in (train, *others))
