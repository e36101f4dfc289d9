"""Composite training objective: 0.5 * MSE + beta * KLD + lambda * COV.

Training conventions: the reconstruction term is the batch mean of squared
Euclidean norms (sum over output features), the KL term is the batch mean of
the closed-form diagonal-Gaussian divergence to N(0, I) (sum over latent
dims). Reporting variants divide by the feature / latent counts. The COV term
penalizes the distance of the aggregated latent covariance from the
identity, with the diagonal and off-diagonal parts weighted equally.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import DimensionError, NumericalError, StatisticsError


@dataclass
class LossBreakdown:
    """Per-batch loss components; ``total = 0.5*mse + beta*kld + lam*cov``."""

    mse: torch.Tensor
    kld: torch.Tensor
    cov: torch.Tensor
    beta: float
    lam: float
    total: torch.Tensor

    def scalars(self, n_outputs: int, latent_dim: int) -> dict[str, float]:
        """Float snapshot with reporting-convention mse/kld for the metrics CSV."""
        return {
            "mse_report": float(self.mse.detach()) / n_outputs,
            "kld_report": float(self.kld.detach()) / latent_dim,
            "cov": float(self.cov.detach()),
            "total": float(self.total.detach()),
            "beta": self.beta,
            "lambda": self.lam,
        }


def mse_loss(y: torch.Tensor, y_hat: torch.Tensor) -> torch.Tensor:
    """Batch mean of squared Euclidean residual norms (training convention)."""
    if y.shape != y_hat.shape:
        raise DimensionError(f"y {tuple(y.shape)} and y_hat {tuple(y_hat.shape)} differ")
    return ((y - y_hat) ** 2).sum(dim=1).mean()


def kld_loss(mean: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """Batch mean KL divergence of N(mean, diag exp(log_var)) from N(0, I).

    Closed form per latent dim: 0.5 * (exp(log_var) + mean^2 - 1 - log_var),
    summed over dims (training convention).
    """
    if mean.shape != log_var.shape:
        raise DimensionError(
            f"mean {tuple(mean.shape)} and log_var {tuple(log_var.shape)} differ"
        )
    if not torch.isfinite(mean).all() or not torch.isfinite(log_var).all():
        raise NumericalError("non-finite latent statistics passed to kld_loss")
    per_dim = 0.5 * (torch.exp(log_var) + mean**2 - 1.0 - log_var)
    return per_dim.sum(dim=1).mean()


def aggregate_cov(mean: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """Covariance of the aggregated latent distribution over the batch.

    Law of total variance: diag of the batch mean of exp(log_var) plus the
    batch covariance of the means (divisor B, expectation semantics).
    """
    if mean.shape[0] < 2:
        raise StatisticsError("aggregate covariance needs a batch of >= 2")
    batch = mean.shape[0]
    centered = mean - mean.mean(dim=0, keepdim=True)
    cov_means = centered.T @ centered / batch
    return cov_means + torch.diag(torch.exp(log_var).mean(dim=0))


def cov_penalty(cov: torch.Tensor) -> torch.Tensor:
    """Squared entry-wise distance from the identity, both parts weighted equally."""
    if cov.dim() != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"covariance must be square, got {tuple(cov.shape)}")
    diag = torch.diagonal(cov)
    off_diag_sq = (cov**2).sum() - (diag**2).sum()
    return off_diag_sq + ((diag - 1.0) ** 2).sum()


def total_loss(
    model,
    x: torch.Tensor,
    y: torch.Tensor,
    beta: float,
    lam: float,
    *,
    eps: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> LossBreakdown:
    """Run the model forward (one latent draw per row) and assemble the loss.

    ``eps`` fixes the latent noise explicitly (deterministic paths, gradient
    checks); otherwise one standard-normal draw per sample comes from
    ``generator``. Differentiable end-to-end with respect to the model
    parameters.
    """
    if beta < 0 or lam < 0:
        raise ValueError(f"weights must be non-negative, got beta={beta}, lambda={lam}")
    y_hat, mean, log_var, _ = model.forward(x, eps=eps, generator=generator)
    mse = mse_loss(y, y_hat)
    kld = kld_loss(mean, log_var)
    cov = cov_penalty(aggregate_cov(mean, log_var))
    total = 0.5 * mse + beta * kld + lam * cov
    return LossBreakdown(mse=mse, kld=kld, cov=cov, beta=beta, lam=lam, total=total)
