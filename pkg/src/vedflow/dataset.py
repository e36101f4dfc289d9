"""Synthetic dataset generation and the on-disk dataset directory format.

A dataset pairs log-transmissivity fields X (N x n, float32) with pressure
responses Y (N x m, float32) sampled at m fixed observation wells. Rows are
drawn independently: per-sample RNG streams are derived from
(seed, "field", sample_index), so the result is identical regardless of
execution order or parallelism.

Directory layout::

    manifest.json   shapes, dtype "f32le", seed, grid/kernel config,
                    well indices, normalization statistics, train split size
    X.bin           float32 little-endian, row-major (N, n)
    Y.bin           float32 little-endian, row-major (N, m)
    mask.bin        uint8, row-major (H, W) active mask
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .errors import ConfigurationError
from .flow import solve_flow
from .grid import FlowGrid
from .kle import KLEBasis, KernelConfig, sample_log_transmissivity

MANIFEST_NAME = "manifest.json"
_FORMAT = "vedflow-dataset-v1"


@dataclass
class NormStats:
    """Per-feature mean/std, computed on the training split only."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean.tolist(),
            "y_std": self.y_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(**{k: np.asarray(d[k], dtype=np.float64) for k in d})


@dataclass
class Dataset:
    """In-memory dataset plus the metadata needed to reproduce it."""

    x: np.ndarray  # (N, n) float32 log-transmissivity
    y: np.ndarray  # (N, m) float32 well pressures
    well_ids: np.ndarray  # (m,) active-cell indices
    mask: np.ndarray  # (H, W) bool
    seed: int
    n_train: int
    norm_stats: NormStats
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def n_cells(self) -> int:
        return self.x.shape[1]

    @property
    def n_wells(self) -> int:
        return self.y.shape[1]

    def train_rows(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x[: self.n_train], self.y[: self.n_train]

    def test_rows(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x[self.n_train :], self.y[self.n_train :]


def _compute_norm_stats(x: np.ndarray, y: np.ndarray, n_train: int) -> NormStats:
    xt = x[:n_train].astype(np.float64)
    yt = y[:n_train].astype(np.float64)
    x_std = xt.std(axis=0)
    y_std = yt.std(axis=0)
    # Constant features would otherwise divide by zero downstream.
    return NormStats(
        x_mean=xt.mean(axis=0),
        x_std=np.maximum(x_std, 1e-12),
        y_mean=yt.mean(axis=0),
        y_std=np.maximum(y_std, 1e-12),
    )


def draw_wells(grid: FlowGrid, n_wells: int, seed: int) -> np.ndarray:
    """Sample well locations uniformly from non-Dirichlet active cells."""
    candidates = np.setdiff1d(np.arange(grid.n_active), grid.dirichlet_cells())
    if n_wells > candidates.size:
        raise ConfigurationError(
            f"requested {n_wells} wells but only {candidates.size} non-Dirichlet "
            "active cells are available"
        )
    gen = seeding.rng(seed, "wells")
    return np.sort(gen.choice(candidates, size=n_wells, replace=False))


def generate_dataset(
    grid: FlowGrid,
    kle: KLEBasis,
    n_samples: int,
    n_wells: int,
    seed: int,
    train_fraction: float = 0.75,
    kernel: KernelConfig | None = None,
) -> Dataset:
    """Draw fields, solve flow for each, and extract well pressures.

    Fully deterministic given (grid, kle, n_samples, n_wells, seed,
    train_fraction). ``kernel`` is recorded in the manifest metadata only.
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    if not 0.0 < train_fraction <= 1.0:
        raise ConfigurationError("train_fraction must lie in (0, 1]")
    if n_wells > grid.n_active:
        raise ConfigurationError("more wells than active cells")

    wells = draw_wells(grid, n_wells, seed)
    n = grid.n_active
    x = np.empty((n_samples, n), dtype=np.float32)
    y = np.empty((n_samples, n_wells), dtype=np.float32)
    for i in range(n_samples):
        field_i = sample_log_transmissivity(kle, seeding.rng(seed, "field", i))
        heads = solve_flow(grid, field_i)
        x[i] = field_i.astype(np.float32)
        y[i] = heads[wells].astype(np.float32)

    n_train = int(round(train_fraction * n_samples))
    n_train = min(max(n_train, 1), n_samples)
    meta = {
        "grid": grid.to_dict(),
        "kernel": kernel.to_dict() if kernel is not None else None,
        "kle_modes": kle.n_modes,
        "train_fraction": train_fraction,
    }
    return Dataset(
        x=x,
        y=y,
        well_ids=wells,
        mask=grid.active_mask.copy(),
        seed=seed,
        n_train=n_train,
        norm_stats=_compute_norm_stats(x, y, n_train),
        meta=meta,
    )


def save_dataset(ds: Dataset, path: str | Path) -> Path:
    """Write the dataset directory format. Byte-identical for identical inputs."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": _FORMAT,
        "dtype": "f32le",
        "shapes": {
            "X": list(ds.x.shape),
            "Y": list(ds.y.shape),
            "mask": list(ds.mask.shape),
        },
        "seed": ds.seed,
        "n_train": ds.n_train,
        "well_indices": ds.well_ids.tolist(),
        "norm_stats": ds.norm_stats.to_dict(),
        "meta": ds.meta,
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    ds.x.astype("<f4").tofile(path / "X.bin")
    ds.y.astype("<f4").tofile(path / "Y.bin")
    ds.mask.astype(np.uint8).tofile(path / "mask.bin")
    return path


def load_dataset(path: str | Path) -> Dataset:
    """Read a dataset directory back into memory."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.exists():
        raise ConfigurationError(f"no dataset manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != _FORMAT:
        raise ConfigurationError(f"unrecognized dataset format {manifest.get('format')!r}")
    (n_rows, n_cols) = manifest["shapes"]["X"]
    (_, n_wells) = manifest["shapes"]["Y"]
    (h, w) = manifest["shapes"]["mask"]
    x = np.fromfile(path / "X.bin", dtype="<f4").reshape(n_rows, n_cols)
    y = np.fromfile(path / "Y.bin", dtype="<f4").reshape(n_rows, n_wells)
    mask = np.fromfile(path / "mask.bin", dtype=np.uint8).reshape(h, w).astype(bool)
    return Dataset(
        x=x,
        y=y,
        well_ids=np.asarray(manifest["well_indices"], dtype=np.int64),
        mask=mask,
        seed=int(manifest["seed"]),
        n_train=int(manifest["n_train"]),
        norm_stats=NormStats.from_dict(manifest["norm_stats"]),
        meta=manifest.get("meta", {}),
    )
