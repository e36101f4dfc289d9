"""Post-training diagnostics: reconstruction ranking, decoded noise, latent covariance.

All diagnostics run the model in eval mode against normalized test data and
are read-only with respect to checkpoints and datasets. Density curves use
Gaussian kernel density estimation with Scott's-rule bandwidth on a 256-point
grid spanning [min - 3 sigma, max + 3 sigma] per feature.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import StatisticsError
from .model import reparameterize

KDE_GRID_POINTS = 256


def kde_curve(
    samples: np.ndarray, n_grid: int = KDE_GRID_POINTS, grid: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE with Scott's-rule bandwidth.

    The default evaluation grid spans [min - 3 sigma, max + 3 sigma]; pass
    ``grid`` to evaluate two sample sets on a shared axis.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size < 2:
        raise StatisticsError("KDE needs at least 2 samples")
    std = samples.std(ddof=1)
    bandwidth = max(std * samples.size ** (-0.2), 1e-12)
    if grid is None:
        grid = np.linspace(samples.min() - 3 * std, samples.max() + 3 * std, n_grid)
    z = (grid[:, None] - samples[None, :]) / bandwidth
    density = np.exp(-0.5 * z * z).mean(axis=1) / (bandwidth * np.sqrt(2 * np.pi))
    return grid, density


def _as_tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.from_numpy(np.asarray(x))


def _batched_forward(model, imgs: torch.Tensor, generator, batch_size: int = 256):
    outs, means, log_vars = [], [], []
    with torch.no_grad():
        for start in range(0, imgs.shape[0], batch_size):
            y_hat, mean, log_var, _ = model.forward(
                imgs[start : start + batch_size], generator=generator
            )
            outs.append(y_hat)
            means.append(mean)
            log_vars.append(log_var)
    return torch.cat(outs), torch.cat(means), torch.cat(log_vars)


@dataclass
class FeatureReport:
    """Per-feature reconstruction quality on the test split."""

    rmse: np.ndarray  # (m,)
    best_features: np.ndarray  # indices of the 3 lowest-RMSE features
    worst_features: np.ndarray  # indices of the 3 highest-RMSE features
    grids: np.ndarray  # (m, n_grid) KDE evaluation grids
    truth_density: np.ndarray  # (m, n_grid)
    recon_density: np.ndarray  # (m, n_grid)


def feature_report(model, imgs_test, y_test, *, seed: int = 0, n_top: int = 3) -> FeatureReport:
    """Reconstruct the test split (fresh latent noise) and rank features by RMSE."""
    imgs = _as_tensor(imgs_test)
    y = _as_tensor(y_test).numpy()
    model.eval()
    gen = torch.Generator().manual_seed(seed)
    y_hat = _batched_forward(model, imgs, gen)[0].numpy()

    rmse = np.sqrt(np.mean((y - y_hat) ** 2, axis=0))
    m = rmse.shape[0]
    if m < 2 * n_top:
        warnings.warn(
            f"only {m} output features; best/worst rankings truncated", stacklevel=2
        )
        n_top = m // 2
    order = np.argsort(rmse)
    grids = np.empty((m, KDE_GRID_POINTS))
    truth = np.empty((m, KDE_GRID_POINTS))
    recon = np.empty((m, KDE_GRID_POINTS))
    for j in range(m):
        grids[j], truth[j] = kde_curve(y[:, j])
        _, recon[j] = kde_curve(y_hat[:, j], grid=grids[j])
    return FeatureReport(
        rmse=rmse,
        best_features=order[:n_top],
        worst_features=order[::-1][:n_top],
        grids=grids,
        truth_density=truth,
        recon_density=recon,
    )


@dataclass
class GenerativeReport:
    """Marginal moments and densities of decoded prior noise vs test data.

    ``score`` is the mean absolute difference of feature means plus the mean
    absolute difference of feature standard deviations; zero iff all matched
    moments are equal.
    """

    decoded_mean: np.ndarray
    decoded_std: np.ndarray
    test_mean: np.ndarray
    test_std: np.ndarray
    score: float
    n_samples: int
    grids: np.ndarray  # (m, n_grid)
    test_density: np.ndarray  # (m, n_grid)
    decoded_density: np.ndarray  # (m, n_grid)


def decode_noise(model, y_test, *, n_samples: int | None = None, seed: int = 0) -> GenerativeReport:
    """Decode standard-normal codes and compare feature-wise marginals to test data."""
    y = _as_tensor(y_test).numpy()
    if n_samples is None:
        n_samples = y.shape[0]
    if n_samples < 2:
        raise StatisticsError("decode_noise needs n_samples >= 2")
    model.eval()
    gen = torch.Generator().manual_seed(seed)
    codes = torch.randn((n_samples, model.latent_dim), generator=gen)
    with torch.no_grad():
        decoded = torch.cat(
            [model.decode(codes[s : s + 512]) for s in range(0, n_samples, 512)]
        ).numpy()
    decoded_mean = decoded.mean(axis=0)
    decoded_std = decoded.std(axis=0, ddof=1)
    test_mean = y.mean(axis=0)
    test_std = y.std(axis=0, ddof=1)
    score = float(
        np.mean(np.abs(decoded_mean - test_mean)) + np.mean(np.abs(decoded_std - test_std))
    )
    m = y.shape[1]
    grids = np.empty((m, KDE_GRID_POINTS))
    test_density = np.empty((m, KDE_GRID_POINTS))
    decoded_density = np.empty((m, KDE_GRID_POINTS))
    for j in range(m):
        grids[j], test_density[j] = kde_curve(y[:, j])
        _, decoded_density[j] = kde_curve(decoded[:, j], grid=grids[j])
    return GenerativeReport(
        decoded_mean=decoded_mean,
        decoded_std=decoded_std,
        test_mean=test_mean,
        test_std=test_std,
        score=score,
        n_samples=n_samples,
        grids=grids,
        test_density=test_density,
        decoded_density=decoded_density,
    )


@dataclass
class LatentCovarianceReport:
    """Empirical covariance of sampled codes over the test split."""

    cov: np.ndarray  # (r, r)
    off_diag_energy: float  # sum of squared off-diagonal entries
    diag_deviation: float  # sum of squared (diagonal - 1) entries


def latent_covariance(model, imgs_test, *, seed: int = 0) -> LatentCovarianceReport:
    """Sample one code per test row and compute their covariance (divisor N)."""
    imgs = _as_tensor(imgs_test)
    n = imgs.shape[0]
    if n < 2:
        raise StatisticsError("latent covariance needs at least 2 test rows")
    model.eval()
    gen = torch.Generator().manual_seed(seed)
    codes = []
    with torch.no_grad():
        for start in range(0, n, 256):
            mean, log_var = model.encode(imgs[start : start + 256])
            eps = torch.randn(mean.shape, generator=gen, dtype=mean.dtype)
            codes.append(reparameterize(mean, log_var, eps))
    z = torch.cat(codes).numpy().astype(np.float64)
    centered = z - z.mean(axis=0)
    cov = centered.T @ centered / n
    diag = np.diag(cov)
    off = float((cov**2).sum() - (diag**2).sum())
    return LatentCovarianceReport(
        cov=cov, off_diag_energy=off, diag_deviation=float(((diag - 1.0) ** 2).sum())
    )


# -- artifact writers (CSV + plots) ------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def write_feature_report(report: FeatureReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "feature_report.csv"
    best, worst = set(report.best_features.tolist()), set(report.worst_features.tolist())
    lines = ["feature,rmse,is_best,is_worst"]
    for j, value in enumerate(report.rmse):
        lines.append(f"{j},{value:.8g},{int(j in best)},{int(j in worst)}")
    csv_path.write_text("\n".join(lines) + "\n")

    plt = _pyplot()
    n_top = len(report.best_features)
    fig, axes = plt.subplots(max(n_top, 1), 2, figsize=(9, 2.6 * max(n_top, 1)), squeeze=False)
    for row, (b, w) in enumerate(zip(report.best_features, report.worst_features)):
        for col, j in ((0, b), (1, w)):
            ax = axes[row][col]
            ax.plot(report.grids[j], report.truth_density[j], label="test")
            ax.plot(report.grids[j], report.recon_density[j], "k--", label="reconstruction")
            ax.set_title(f"feature {j} (rmse {report.rmse[j]:.3f})", fontsize=9)
            if row == 0:
                ax.legend(fontsize=8)
    fig.tight_layout()
    png_path = out_dir / "feature_densities.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def write_generative_report(report: GenerativeReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "decode_noise.csv"
    lines = ["feature,test_mean,test_std,decoded_mean,decoded_std"]
    for j in range(report.test_mean.shape[0]):
        lines.append(
            f"{j},{report.test_mean[j]:.8g},{report.test_std[j]:.8g},"
            f"{report.decoded_mean[j]:.8g},{report.decoded_std[j]:.8g}"
        )
    csv_path.write_text("\n".join(lines) + "\n")
    summary_path = out_dir / "decode_noise_summary.json"
    summary_path.write_text(
        json.dumps({"score": report.score, "n_samples": report.n_samples}, indent=2) + "\n"
    )

    plt = _pyplot()
    shown = min(6, report.grids.shape[0])
    fig, axes = plt.subplots(2, 3, figsize=(11, 5), squeeze=False)
    for j in range(shown):
        ax = axes[j // 3][j % 3]
        ax.plot(report.grids[j], report.test_density[j], label="test")
        ax.plot(report.grids[j], report.decoded_density[j], "k--", label="decoded noise")
        ax.set_title(f"feature {j}", fontsize=9)
        if j == 0:
            ax.legend(fontsize=8)
    fig.tight_layout()
    png_path = out_dir / "decode_densities.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, summary_path, png_path]


def write_latent_covariance(report: LatentCovarianceReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "latent_covariance.csv"
    np.savetxt(csv_path, report.cov, delimiter=",")
    summary_path = out_dir / "latent_covariance_summary.json"
    summary_path.write_text(
        json.dumps(
            {
                "off_diag_energy": report.off_diag_energy,
                "diag_deviation": report.diag_deviation,
            },
            indent=2,
        )
        + "\n"
    )
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    image = ax.imshow(report.cov, cmap="RdBu_r", vmin=-1.5, vmax=1.5)
    fig.colorbar(image, ax=ax)
    ax.set_title("latent code covariance")
    png_path = out_dir / "latent_covariance.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, summary_path, png_path]
