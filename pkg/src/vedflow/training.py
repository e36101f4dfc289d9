"""Training protocol: Adam, cosine-decay LR, gradient clipping, schedules, sweeps.

Each run is driven by one root seed expanded into named substreams (weight
init, batch shuffling, latent noise, evaluation noise), so a config + seed
pair fully determines the result on a fixed execution profile. Test metrics
are computed after every epoch in eval mode with a fixed evaluation RNG, and
the parameters achieving the best test MSE are checkpointed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np
import torch

from . import seeding
from .dataset import Dataset
from .errors import ConfigurationError, NumericalError, TrainingDivergedError
from .gridmap import GridMap, map_to_grid
from .losses import LossBreakdown, aggregate_cov, cov_penalty, kld_loss, mse_loss, total_loss
from .model import ArchConfig, VED, build_model, save_checkpoint

METRICS_CSV_COLUMNS = ("epoch", "split", "mse_report", "kld_report", "cov", "total", "beta", "lambda")


@dataclass(frozen=True)
class Schedule:
    """Epoch-indexed weight schedule for the loss regularizers.

    Kinds: ``constant`` (value), ``linear`` (start -> end over training),
    ``step`` (values switching at epoch-fraction boundaries), ``cyclic``
    (sawtooth start -> end repeated n_cycles times).
    """

    kind: str = "constant"
    value: float = 0.0
    start: float = 0.0
    end: float = 0.0
    boundaries: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    n_cycles: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "step", "cyclic"):
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "step":
            if len(self.values) != len(self.boundaries) + 1:
                raise ConfigurationError(
                    "step schedule needs len(values) == len(boundaries) + 1"
                )
            if any(not 0.0 < b < 1.0 for b in self.boundaries) or list(
                self.boundaries
            ) != sorted(self.boundaries):
                raise ConfigurationError("step boundaries must be sorted fractions in (0, 1)")
        if self.kind == "cyclic" and self.n_cycles < 1:
            raise ConfigurationError("cyclic schedule needs n_cycles >= 1")


def as_schedule(value) -> Schedule:
    """Coerce a float, dict, or Schedule into a Schedule."""
    if isinstance(value, Schedule):
        return value
    if isinstance(value, dict):
        d = dict(value)
        for key in ("boundaries", "values"):
            if key in d:
                d[key] = tuple(d[key])
        return Schedule(**d)
    return Schedule(kind="constant", value=float(value))


def schedule_value(sched: Schedule, epoch: int, total_epochs: int) -> float:
    """Weight at ``epoch`` under the schedule; epoch must lie in [0, total)."""
    if not 0 <= epoch < total_epochs:
        raise ConfigurationError(f"epoch {epoch} outside [0, {total_epochs})")
    if sched.kind == "constant":
        return sched.value
    frac = epoch / total_epochs
    if sched.kind == "linear":
        return sched.start + (sched.end - sched.start) * frac
    if sched.kind == "step":
        idx = int(np.searchsorted(np.asarray(sched.boundaries), frac, side="right"))
        return sched.values[idx]
    cycle_len = total_epochs / sched.n_cycles
    pos = (epoch % cycle_len) / cycle_len
    return sched.start + (sched.end - sched.start) * pos


def cosine_lr(epoch: int, total_epochs: int, lr_init: float, lr_final: float) -> float:
    """Cosine decay hitting lr_init at epoch 0 and lr_final at the last epoch."""
    if total_epochs == 1:
        return lr_init
    t = epoch / (total_epochs - 1)
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(math.pi * t))


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters and the run's root seed."""

    epochs: int = 100
    batch_size: int = 100
    lr_init: float = 1e-3
    lr_final: float = 1e-5
    clip_norm: float = 1.0
    beta: float | Schedule = 0.01
    lam: float | Schedule = 0.01
    seed: int = 0
    train_size: int | None = None
    test_size: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2 (batch norm)")
        if self.clip_norm <= 0:
            raise ConfigurationError("clip_norm must be positive")
        as_schedule(self.beta)
        as_schedule(self.lam)


@dataclass
class MetricsRecord:
    """Per-epoch test metrics and best-checkpoint bookkeeping for one run."""

    test_mse: list[float] = field(default_factory=list)
    test_kld: list[float] = field(default_factory=list)
    train_total: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_mse: float = math.inf
    best_kld: float = math.inf
    checkpoint_path: str = ""
    max_grad_norm: float = 0.0

    def to_dict(self) -> dict:
        return {
            "test_mse": self.test_mse,
            "test_kld": self.test_kld,
            "train_total": self.train_total,
            "best_epoch": self.best_epoch,
            "best_mse": self.best_mse,
            "best_kld": self.best_kld,
            "checkpoint_path": self.checkpoint_path,
            "max_grad_norm": self.max_grad_norm,
        }


def normalized_tensors(
    ds: Dataset, train_size: int | None = None, test_size: int | None = None
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Masked input images and normalized outputs for the train/test splits.

    Normalization always uses the dataset's stored training-split statistics,
    also when ``train_size`` restricts the rows actually used.
    """
    stats = ds.norm_stats
    gm = GridMap.from_mask(ds.mask)

    def prep(x: np.ndarray, y: np.ndarray, limit: int | None):
        if limit is not None:
            x, y = x[:limit], y[:limit]
        xn = (x.astype(np.float64) - stats.x_mean) / stats.x_std
        imgs = map_to_grid(xn.astype(np.float32), gm)[:, None, :, :]
        yn = ((y.astype(np.float64) - stats.y_mean) / stats.y_std).astype(np.float32)
        return torch.from_numpy(imgs), torch.from_numpy(yn)

    x_tr, y_tr = ds.train_rows()
    x_te, y_te = ds.test_rows()
    train_imgs, train_y = prep(x_tr, y_tr, train_size)
    test_imgs, test_y = prep(x_te, y_te, test_size)
    return train_imgs, train_y, test_imgs, test_y


def evaluate_split(
    model: VED,
    imgs: torch.Tensor,
    y: torch.Tensor,
    beta: float,
    lam: float,
    eval_seed: int,
    batch_size: int = 256,
) -> LossBreakdown:
    """Eval-mode metrics over a whole split with a fixed evaluation RNG.

    One latent draw per row; the COV term is computed over the full split's
    aggregated latent distribution.
    """
    was_training = model.training
    model.eval()
    gen = torch.Generator().manual_seed(eval_seed)
    outs, means, log_vars = [], [], []
    with torch.no_grad():
        for start in range(0, imgs.shape[0], batch_size):
            y_hat, mean, log_var, _ = model.forward(
                imgs[start : start + batch_size], generator=gen
            )
            outs.append(y_hat)
            means.append(mean)
            log_vars.append(log_var)
        y_hat = torch.cat(outs)
        mean = torch.cat(means)
        log_var = torch.cat(log_vars)
        mse = mse_loss(y, y_hat)
        kld = kld_loss(mean, log_var)
        cov = cov_penalty(aggregate_cov(mean, log_var))
        total = 0.5 * mse + beta * kld + lam * cov
    if was_training:
        model.train()
    return LossBreakdown(mse=mse, kld=kld, cov=cov, beta=beta, lam=lam, total=total)


def _grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(p.grad.detach().double().pow(2).sum())
    return math.sqrt(total)


def clip_grad_norm(params, max_norm: float) -> float:
    """Global-norm gradient clipping; returns the post-clip norm.

    Scales with a 1e-6 safety factor so the post-clip norm stays at or below
    ``max_norm`` despite float32 rounding of the in-place multiply.
    """
    params = [p for p in params if p.grad is not None]
    total = _grad_norm(params)
    if total > max_norm:
        coef = max_norm / total * (1.0 - 1e-6)
        for p in params:
            p.grad.detach().mul_(coef)
        total = _grad_norm(params)
    return total


def train(ds: Dataset, arch: ArchConfig, cfg: TrainConfig, out_dir: str | Path) -> MetricsRecord:
    """Optimize a VED on the dataset; returns the per-epoch metrics record.

    Writes ``metrics.csv`` (one train and one test row per epoch),
    ``best.ckpt`` (parameters at the best test MSE), and ``metrics.json``
    into ``out_dir``. Deterministic given (dataset, arch, cfg) on a fixed
    execution profile.

    Raises:
        TrainingDivergedError: on a non-finite loss; the last good checkpoint
            stays on disk and the partial record rides on the exception.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if tuple(arch.input_shape) != ds.mask.shape:
        raise ConfigurationError(
            f"arch input_shape {arch.input_shape} != dataset mask shape {ds.mask.shape}"
        )
    if arch.n_outputs != ds.n_wells:
        raise ConfigurationError(
            f"arch n_outputs {arch.n_outputs} != dataset well count {ds.n_wells}"
        )

    train_imgs, train_y, test_imgs, test_y = normalized_tensors(
        ds, cfg.train_size, cfg.test_size
    )
    n_train = train_imgs.shape[0]
    if n_train < cfg.batch_size:
        raise ConfigurationError(
            f"train split ({n_train} rows) smaller than batch_size {cfg.batch_size}"
        )
    if test_imgs.shape[0] < 2:
        raise ConfigurationError("test split needs at least 2 rows for epoch metrics")

    beta_sched = as_schedule(cfg.beta)
    lam_sched = as_schedule(cfg.lam)
    model = build_model(arch, seeding.torch_seed(cfg.seed, "init"))
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr_init)
    shuffle_gen = torch.Generator().manual_seed(seeding.torch_seed(cfg.seed, "shuffle"))
    eps_gen = torch.Generator().manual_seed(seeding.torch_seed(cfg.seed, "eps"))
    eval_seed = seeding.torch_seed(cfg.seed, "eval")

    record = MetricsRecord()
    ckpt_path = out_dir / "best.ckpt"
    csv_path = out_dir / "metrics.csv"
    params = [p for p in model.parameters() if p.requires_grad]

    with open(csv_path, "w", newline="") as csv_file:
        writer = csv.DictWriter(csv_file, fieldnames=["epoch", "split", *METRICS_CSV_COLUMNS[2:]])
        writer.writeheader()
        for epoch in range(cfg.epochs):
            lr = cosine_lr(epoch, cfg.epochs, cfg.lr_init, cfg.lr_final)
            for group in optimizer.param_groups:
                group["lr"] = lr
            beta = schedule_value(beta_sched, epoch, cfg.epochs)
            lam = schedule_value(lam_sched, epoch, cfg.epochs)

            model.train()
            perm = torch.randperm(n_train, generator=shuffle_gen)
            epoch_rows: list[dict[str, float]] = []
            for start in range(0, n_train, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                if idx.shape[0] < 2:  # batch norm cannot run on a single row
                    continue
                optimizer.zero_grad()
                try:
                    breakdown = total_loss(
                        model, train_imgs[idx], train_y[idx], beta, lam, generator=eps_gen
                    )
                    cause = None if torch.isfinite(breakdown.total) else "loss overflow"
                except NumericalError as exc:
                    cause = str(exc)
                if cause is not None:
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch} ({cause}); "
                        f"last good checkpoint: {record.checkpoint_path or 'none'}",
                        record=record,
                    )
                breakdown.total.backward()
                post_clip = clip_grad_norm(params, cfg.clip_norm)
                record.max_grad_norm = max(record.max_grad_norm, post_clip)
                optimizer.step()
                epoch_rows.append(breakdown.scalars(arch.n_outputs, arch.latent_dim))

            train_means = {
                key: float(np.mean([row[key] for row in epoch_rows])) for key in epoch_rows[0]
            }
            writer.writerow({"epoch": epoch, "split": "train", **train_means})
            record.train_total.append(train_means["total"])

            test_breakdown = evaluate_split(
                model, test_imgs, test_y, beta, lam, eval_seed, max(cfg.batch_size, 2)
            )
            test_scalars = test_breakdown.scalars(arch.n_outputs, arch.latent_dim)
            writer.writerow({"epoch": epoch, "split": "test", **test_scalars})
            record.test_mse.append(test_scalars["mse_report"])
            record.test_kld.append(test_scalars["kld_report"])

            if test_scalars["mse_report"] < record.best_mse:
                record.best_mse = test_scalars["mse_report"]
                record.best_kld = test_scalars["kld_report"]
                record.best_epoch = epoch
                save_checkpoint(
                    model,
                    ckpt_path,
                    step=(epoch + 1) * math.ceil(n_train / cfg.batch_size),
                    metrics={"epoch": epoch, **test_scalars},
                )
                record.checkpoint_path = str(ckpt_path)

    (out_dir / "metrics.json").write_text(json.dumps(record.to_dict(), indent=2) + "\n")
    return record


def sweep(
    ds: Dataset,
    arch_base: ArchConfig,
    cfg_base: TrainConfig,
    r_list: list[int],
    beta_list: list[float],
    lambda_list: list[float],
    out_dir: str | Path,
    share_seed: bool = False,
) -> list[dict]:
    """Train every (r, beta, lambda) cell and tabulate best test MSE/KLD.

    Cells run independently; by default each gets a seed derived from
    (cfg_base.seed, cell_index) so they are decorrelated, while
    ``share_seed=True`` reuses the base seed everywhere for matched-seed
    comparisons. Per-cell failures are recorded and the sweep continues.
    Writes ``sweep.csv``; the per-r best MSE rows are flagged.
    """
    if not (r_list and beta_list and lambda_list):
        raise ConfigurationError("sweep grids must be non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    for cell_index, (r, beta, lam) in enumerate(product(r_list, beta_list, lambda_list)):
        if share_seed:
            cell_seed = cfg_base.seed
        else:
            cell_seed = int(
                seeding.seed_sequence(cfg_base.seed, "cell", cell_index).generate_state(1)[0]
            )
        cell_dir = out_dir / f"r{r}_beta{beta:g}_lambda{lam:g}"
        row = {
            "r": r,
            "beta": beta,
            "lambda": lam,
            "status": "ok",
            "best_epoch": None,
            "best_mse": None,
            "best_kld": None,
            "checkpoint": "",
            "error": "",
            "best_for_r": False,
        }
        try:
            cfg = replace(cfg_base, beta=beta, lam=lam, seed=cell_seed)
            arch = replace(arch_base, latent_dim=r)
            rec = train(ds, arch, cfg, cell_dir)
            row.update(
                best_epoch=rec.best_epoch,
                best_mse=rec.best_mse,
                best_kld=rec.best_kld,
                checkpoint=rec.checkpoint_path,
            )
        except Exception as exc:  # noqa: BLE001 - per-cell isolation is the contract
            row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        rows.append(row)

    for r in r_list:
        ok = [row for row in rows if row["r"] == r and row["status"] == "ok"]
        if ok:
            min(ok, key=lambda row: row["best_mse"])["best_for_r"] = True

    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    return rows
