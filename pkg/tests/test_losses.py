import numpy as np
import pytest
import torch
from oracles import monte_carlo_code_covariance, monte_carlo_kl

from vedflow.errors import DimensionError, StatisticsError
from vedflow.losses import aggregate_cov, cov_penalty, kld_loss, mse_loss, total_loss
from vedflow.model import ArchConfig, build_model


def test_mse_zero_on_equal():
    y = torch.randn(3, 4)
    assert float(mse_loss(y, y.clone())) == 0.0


def test_mse_arithmetic_example():
    y = torch.zeros(1, 3)
    y_hat = -torch.tensor([[1.0, 2.0, 2.0]])
    value = mse_loss(y, y_hat)
    assert float(value) == 9.0
    assert float(value) / 3 == 3.0  # reporting convention


def test_mse_matches_bruteforce(rng):
    y = torch.tensor(rng.normal(size=(4, 6)))
    y_hat = torch.tensor(rng.normal(size=(4, 6)))
    brute = 0.0
    for b in range(4):
        row = 0.0
        for j in range(6):
            row += (float(y[b, j]) - float(y_hat[b, j])) ** 2
        brute += row
    brute /= 4
    assert abs(float(mse_loss(y, y_hat)) - brute) < 1e-12
    with pytest.raises(DimensionError):
        mse_loss(y, y_hat[:, :5])


def test_kld_closed_form_values():
    assert float(kld_loss(torch.zeros(2, 3), torch.zeros(2, 3))) == 0.0
    value = kld_loss(torch.ones(1, 1), torch.zeros(1, 1))
    assert abs(float(value) - 0.5) < 1e-12


def test_kld_nonnegative_and_zero_only_at_prior(rng):
    for _ in range(20):
        g = torch.tensor(rng.normal(size=(5, 4)))
        h = torch.tensor(rng.normal(size=(5, 4)))
        assert float(kld_loss(g, h)) >= 0.0
    assert float(kld_loss(torch.zeros(2, 4), torch.zeros(2, 4))) == 0.0
    assert float(kld_loss(0.1 * torch.ones(2, 4), torch.zeros(2, 4))) > 0.0


def test_kld_matches_monte_carlo(rng):
    # KL(q || p) estimated as the average log-density ratio under q.
    r = 3
    for _ in range(3):
        g = rng.normal(scale=0.8, size=r)
        h = rng.normal(scale=0.6, size=r)
        closed = float(kld_loss(torch.tensor(g[None, :]), torch.tensor(h[None, :])))
        mc = monte_carlo_kl(g, h, 1_000_000, rng)
        assert abs(closed - mc) / max(abs(closed), abs(mc)) < 0.01


def test_aggregate_cov_identical_rows_unit_logvar():
    g = torch.ones(2, 3)
    cov = aggregate_cov(g, torch.zeros(2, 3))
    assert torch.allclose(cov, torch.eye(3), atol=1e-12)


def test_aggregate_cov_two_point_means():
    g = torch.tensor([[1.0, 0.0], [-1.0, 0.0]])
    h = torch.full((2, 2), -10.0)
    cov = aggregate_cov(g, h)
    expected = torch.tensor([[1.0, 0.0], [0.0, 0.0]])
    assert torch.allclose(cov, expected, atol=1e-4)
    with pytest.raises(StatisticsError):
        aggregate_cov(g[:1], h[:1])


def test_aggregate_cov_matches_code_sampling(rng):
    batch, r = 64, 3
    g = rng.normal(size=(batch, r))
    h = rng.normal(scale=0.5, size=(batch, r))
    cov = aggregate_cov(torch.tensor(g), torch.tensor(h)).numpy()
    empirical = monte_carlo_code_covariance(g, h, 200_000, rng)
    assert np.abs(cov - empirical).max() < 0.02


def test_aggregate_cov_permutation_invariant(rng):
    g = torch.tensor(rng.normal(size=(16, 4)))
    h = torch.tensor(rng.normal(size=(16, 4)))
    perm = torch.randperm(16)
    assert torch.allclose(aggregate_cov(g, h), aggregate_cov(g[perm], h[perm]), atol=1e-12)


def test_cov_penalty_analytic_cases():
    assert float(cov_penalty(torch.eye(3))) == 0.0
    assert abs(float(cov_penalty(2.0 * torch.eye(2))) - 2.0) < 1e-12
    mat = torch.tensor([[1.0, 0.5], [0.5, 1.0]])
    assert abs(float(cov_penalty(mat)) - 0.5) < 1e-12
    with pytest.raises(DimensionError):
        cov_penalty(torch.zeros(2, 3))


SMALL_SCHEDULE = (1, 4, 8, 12, 16, 24)


def _tiny_setup(seed=0, double=True):
    arch = ArchConfig(
        input_shape=(4, 3), latent_dim=2, n_outputs=3, channel_schedule=(1, 2, 3, 4, 5, 6)
    )
    model = build_model(arch, seed)
    if double:
        model.double()
    torch.manual_seed(seed + 1)
    x = torch.randn(4, 1, 4, 3, dtype=torch.float64 if double else torch.float32)
    y = torch.randn(4, 3, dtype=torch.float64 if double else torch.float32)
    eps = torch.randn(4, 2, dtype=torch.float64 if double else torch.float32)
    return model, x, y, eps


def test_total_loss_reduces_to_half_mse():
    model, x, y, eps = _tiny_setup()
    model.train()
    bd = total_loss(model, x, y, 0.0, 0.0, eps=eps)
    assert float(bd.total.detach()) == 0.5 * float(bd.mse.detach())


def test_total_loss_linear_in_weights():
    model, x, y, eps = _tiny_setup()
    model.train()
    base = total_loss(model, x, y, 0.0, 0.0, eps=eps)
    shifted = total_loss(model, x, y, 0.3, 0.7, eps=eps)
    lhs = float(shifted.total.detach()) - float(base.total.detach())
    rhs = 0.3 * float(shifted.kld.detach()) + 0.7 * float(shifted.cov.detach())
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(rhs))
    assert float(shifted.total.detach()) == pytest.approx(
        0.5 * float(shifted.mse.detach())
        + 0.3 * float(shifted.kld.detach())
        + 0.7 * float(shifted.cov.detach()),
        rel=1e-12,
    )
    with pytest.raises(ValueError):
        total_loss(model, x, y, -0.1, 0.0, eps=eps)


class _PerfectModel(torch.nn.Module):
    """Reconstructs y exactly and encodes to the prior; total loss must vanish."""

    def __init__(self, y):
        super().__init__()
        self.y = y

    def forward(self, x, eps=None, generator=None):
        batch = x.shape[0]
        mean = torch.zeros(batch, 2)
        return self.y, mean, torch.zeros(batch, 2), mean


def test_total_loss_zero_for_perfect_model():
    y = torch.randn(4, 3)
    bd = total_loss(_PerfectModel(y), torch.zeros(4, 1, 2, 2), y, 0.5, 0.5)
    assert float(bd.total.detach()) == 0.0


def _flat_grads(model):
    return torch.cat([p.grad.reshape(-1) for p in model.parameters()])


def test_train_mode_gradients_match_finite_differences():
    # Train mode exercises the batch-statistics gradient path of batch norm.
    # Batch-norm curvature at tiny batch variances makes h = 1e-4 central
    # differences inaccurate (error scales as h^2), so this check runs at
    # h = 1e-5. Exactly-dead parameters (zero analytic gradient behind dead
    # ReLU paths) are compared against an absolute tolerance via the floor
    # in the denominator, since FD noise has no relative meaning there.
    model, x, y, eps = _tiny_setup(seed=3)
    model.train()
    beta, lam = 0.01, 0.01

    bd = total_loss(model, x, y, beta, lam, eps=eps)
    model.zero_grad()
    bd.total.backward()
    analytic = _flat_grads(model).detach().clone()

    step = 1e-5
    fd = torch.zeros_like(analytic)
    offset = 0
    with torch.no_grad():
        for p in model.parameters():
            flat = p.data.reshape(-1)
            for i in range(flat.numel()):
                original = float(flat[i])
                flat[i] = original + step
                up = float(total_loss(model, x, y, beta, lam, eps=eps).total.detach())
                flat[i] = original - step
                down = float(total_loss(model, x, y, beta, lam, eps=eps).total.detach())
                flat[i] = original
                fd[offset + i] = (up - down) / (2 * step)
            offset += flat.numel()

    rel = (analytic - fd).abs() / torch.clamp(
        torch.maximum(analytic.abs(), fd.abs()), min=1e-5
    )
    assert float(rel.max()) < 1e-4
