"""Independent reference implementations shared by unit and acceptance tests.

These deliberately recompute results through a different code path than the
library (explicit loops, dense solvers) so agreement is meaningful.
"""

import numpy as np


def dense_reference_solve(grid, log_t):
    """Dense finite-volume assembly with explicit per-cell, per-face loops."""
    n = grid.n_active
    ids = grid.active_ids()
    t = np.exp(np.asarray(log_t, dtype=float))
    a = np.zeros((n, n))
    b = np.zeros(n)
    rows, cols = np.nonzero(grid.active_mask)
    for i, (r, c) in enumerate(zip(rows, cols)):
        for dr, dc, side in ((0, -1, "left"), (0, 1, "right"), (-1, 0, "top"), (1, 0, "bottom")):
            rr, cc = r + dr, c + dc
            inside = 0 <= rr < grid.height and 0 <= cc < grid.width
            if inside and grid.active_mask[rr, cc]:
                j = ids[rr, cc]
                w = 2.0 * t[i] * t[j] / (t[i] + t[j])
                a[i, i] += w
                a[i, j] -= w
            else:
                value = grid.bc.value(side)
                if value is not None:
                    a[i, i] += 2.0 * t[i]
                    b[i] += 2.0 * t[i] * value
    return np.linalg.solve(a, b)


def monte_carlo_kl(mean, log_var, n_samples, rng):
    """KL(N(mean, diag exp(log_var)) || N(0, I)) via the log-density ratio."""
    mean = np.asarray(mean, dtype=float)
    std = np.exp(0.5 * np.asarray(log_var, dtype=float))
    z = mean + std * rng.standard_normal((n_samples, mean.size))
    log_q = -0.5 * (((z - mean) / std) ** 2 + 2.0 * np.log(std) + np.log(2 * np.pi)).sum(axis=1)
    log_p = -0.5 * (z**2 + np.log(2 * np.pi)).sum(axis=1)
    return float(np.mean(log_q - log_p))


def monte_carlo_code_covariance(mean, log_var, n_samples, rng):
    """Covariance of codes z = mean_b + eps * exp(log_var_b / 2), b uniform."""
    mean = np.asarray(mean, dtype=float)
    log_var = np.asarray(log_var, dtype=float)
    picks = rng.integers(0, mean.shape[0], size=n_samples)
    eps = rng.standard_normal((n_samples, mean.shape[1]))
    z = mean[picks] + eps * np.exp(0.5 * log_var[picks])
    centered = z - z.mean(axis=0)
    return centered.T @ centered / n_samples
