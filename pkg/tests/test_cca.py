import numpy as np
import pytest
import scipy.linalg

from vedflow.cca import CCAResult, cev_curve, fit_cca, latent_dim_for_threshold, standardize
from vedflow.errors import DegenerateDataError, StatisticsError


def _well_conditioned_x(rng, n_samples, n_features):
    x = rng.normal(size=(n_samples, n_features))
    return x @ (np.eye(n_features) + 0.3 * rng.normal(size=(n_features, n_features)))


def test_perfect_correlation_gives_unit_eigenvalues(rng):
    x = _well_conditioned_x(rng, 200, 5)
    res = fit_cca(x, x, eps=1e-8)
    np.testing.assert_allclose(res.corr_sq, np.ones(5), atol=1e-6)


def test_independent_outputs_give_small_eigenvalues(rng):
    x = rng.normal(size=(10_000, 4))
    y = rng.normal(size=(10_000, 4))
    res = fit_cca(x, y)
    assert res.corr_sq.max() < 0.05


def test_matches_dense_generalized_eigensolver(rng):
    n_samples, n, m = 400, 3, 3
    x = _well_conditioned_x(rng, n_samples, n)
    y = x @ rng.normal(size=(n, m)) + 0.5 * rng.normal(size=(n_samples, m))
    res = fit_cca(x, y, eps=1e-6)

    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    sxx = xc.T @ xc / (n_samples - 1)
    syy = yc.T @ yc / (n_samples - 1)
    sxy = xc.T @ yc / (n_samples - 1)
    gram = sxy @ np.linalg.solve(syy + res.eps_y * np.eye(m), sxy.T)
    vals, vecs = scipy.linalg.eigh(gram, sxx + res.eps_x * np.eye(n))
    vals, vecs = vals[::-1], vecs[:, ::-1]

    np.testing.assert_allclose(res.corr_sq, vals, atol=1e-8)
    for k in range(n):
        a, b = res.weights[:, k], vecs[:, k]
        if np.dot(a, b) < 0:
            b = -b
        np.testing.assert_allclose(a, b, atol=1e-8)


def test_rank_one_relation(rng):
    n_samples, n, m = 2000, 6, 5
    x = rng.normal(size=(n_samples, n))
    v = rng.normal(size=n)
    w = rng.normal(size=m)
    y = np.outer(x @ v, w) + 1e-3 * rng.normal(size=(n_samples, m))
    res = fit_cca(x, y)
    curve = cev_curve(res)
    assert curve[0] > 0.99
    assert latent_dim_for_threshold(res, 0.95) == 1


def test_rank_eight_map_recovered(rng):
    n_samples, n, m, rank = 5000, 20, 12, 8
    x = rng.normal(size=(n_samples, n))
    w = rng.normal(size=(n, rank)) @ rng.normal(size=(rank, m))
    signal = x @ w
    y = signal + 0.01 * signal.std() * rng.normal(size=(n_samples, m))
    res = fit_cca(*standardize(x), *standardize(y))  # noqa: B905 - pairwise scaling
    dim = latent_dim_for_threshold(res, 0.95)
    assert 7 <= dim <= 10


def test_cev_monotone_terminal_one(rng):
    x = rng.normal(size=(300, 6))
    y = x @ rng.normal(size=(6, 4)) + rng.normal(size=(300, 4))
    curve = cev_curve(fit_cca(x, y))
    assert np.all(np.diff(curve) >= -1e-15)
    assert curve[-1] == 1.0
    assert latent_dim_for_threshold(fit_cca(x, y), 1.0) == 4


def test_cev_additivity_and_total(rng):
    x = rng.normal(size=(500, 5))
    y = x @ rng.normal(size=(5, 7)) + rng.normal(size=(500, 7))
    res = fit_cca(x, y)
    col_norms = np.sum(res.loadings**2, axis=0)
    increments = np.diff(np.concatenate([[0.0], res.cev]))
    np.testing.assert_allclose(increments, col_norms, rtol=0, atol=1e-12 * res.cev[-1])
    assert abs(res.cev[-1] - np.trace(res.loadings @ res.loadings.T)) < 1e-8


def test_gram_matrix_psd(rng):
    x = rng.normal(size=(200, 5))
    y = rng.normal(size=(200, 3))
    res = fit_cca(x, y)
    assert res.corr_sq.min() >= -1e-10


def test_ridge_monotonicity(rng):
    x = _well_conditioned_x(rng, 300, 4)
    y = x @ rng.normal(size=(4, 4)) + rng.normal(size=(300, 4))
    eps_grid = [0.0, 1e-4, 1e-2, 1.0]
    previous = None
    for eps in eps_grid:
        res = fit_cca(x, y, eps=eps)
        if previous is not None:
            assert np.all(res.corr_sq <= previous + 1e-12)
        previous = res.corr_sq


def test_statistics_and_degenerate_errors(rng):
    with pytest.raises(StatisticsError):
        fit_cca(np.zeros((1, 3)), np.zeros((1, 2)))
    res = fit_cca(rng.normal(size=(50, 3)), rng.normal(size=(50, 2)))
    degenerate = CCAResult(
        corr_sq=res.corr_sq,
        weights=res.weights,
        loadings=res.loadings,
        cev=np.zeros_like(res.cev),
        eps_x=res.eps_x,
        eps_y=res.eps_y,
        total_output_variance=res.total_output_variance,
    )
    with pytest.raises(DegenerateDataError):
        cev_curve(degenerate)


def test_explained_variance_ratio_bounded(rng):
    x = rng.normal(size=(800, 6))
    y = x @ rng.normal(size=(6, 5)) + 0.5 * rng.normal(size=(800, 5))
    res = fit_cca(x, y)
    assert 0.0 < res.explained_variance_ratio <= 1.0 + 1e-9
