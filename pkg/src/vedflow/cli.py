"""Command-line entry point orchestrating the full experiment workflow.

Subcommands::

    generate     build a synthetic dataset directory
    cca          linear latent-dimension estimate + CEV curve artifacts
    train        train one VED configuration
    sweep        train an (r, beta, lambda) grid and tabulate results
    eval-recon   per-feature reconstruction report for a checkpoint
    eval-decode  decoded-Gaussian-noise generative report
    eval-cov     empirical latent-code covariance report
    pipeline     generate -> cca -> sweep -> eval on the best sweep cell

One JSON config file drives every stage (all keys optional; see
``default_config``); ``--seed``, ``--out`` and per-stage flags override it.
All randomness derives from the root seed through named substreams. Exit
codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
The environment variable ``VED_NUM_THREADS`` caps torch's thread pool.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import time
from pathlib import Path

from . import __version__, seeding
from .errors import (
    ConfigurationError,
    DegenerateDataError,
    DimensionError,
    NumericalError,
    StatisticsError,
    VedflowError,
    WellPosednessError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

_DATA_ERRORS = (DimensionError, StatisticsError, DegenerateDataError, WellPosednessError)


def default_config() -> dict:
    """Documented config schema with desk-scale defaults."""
    return {
        "seed": 0,
        "grid": {
            "height": 24,
            "width": 18,
            "cell_size": 1.0,
            "irregular": True,
            "max_bite_frac": 0.3,
            "bc": {"left": 1.0, "right": 0.0, "top": None, "bottom": None},
        },
        "kernel": {"variance": 1.0, "length_scale": None},  # None: 0.2 * domain width
        "kle_modes": None,  # None: min(n_active, 1000)
        "dataset": {"n_samples": 4000, "n_wells": 30, "train_fraction": 0.75},
        "cca": {"threshold": 0.95, "eps": None},
        "arch": {
            "latent_dim": 32,
            "channel_schedule": [1, 16, 32, 64, 128, 256],
            "decoder_hidden": 512,
        },
        "train": {
            "epochs": 40,
            "batch_size": 100,
            "lr_init": 1e-3,
            "lr_final": 1e-5,
            "clip_norm": 1.0,
            "beta": 0.01,
            "lambda": 0.01,
            "train_size": None,
            "test_size": None,
        },
        "sweep": {"r": [8, 16, 32], "beta": [0.0, 0.01], "lambda": [0.0, 0.01], "share_seed": False},
        "eval": {"n_top": 3},
    }


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigurationError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path: str | None) -> dict:
    cfg = default_config()
    if path is None:
        return cfg
    file = Path(path)
    if not file.exists():
        raise ConfigurationError(f"config file not found: {file}")
    try:
        user = json.loads(file.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config file {file}: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigurationError("config file must hold a JSON object")
    return _merge(cfg, user)


def _apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "r", None) is not None:
        cfg["arch"]["latent_dim"] = args.r
    if getattr(args, "beta", None) is not None:
        cfg["train"]["beta"] = args.beta
    if getattr(args, "lam", None) is not None:
        cfg["train"]["lambda"] = args.lam
    if getattr(args, "epochs", None) is not None:
        cfg["train"]["epochs"] = args.epochs
    if getattr(args, "train_size", None) is not None:
        cfg["train"]["train_size"] = args.train_size
    return cfg


def _apply_thread_cap():
    cap = os.environ.get("VED_NUM_THREADS")
    if cap:
        import torch

        torch.set_num_threads(max(1, int(cap)))


class _Manifest:
    """Per-run manifest: command, resolved config, artifacts, wall clock."""

    def __init__(self, command: str, cfg: dict, out_dir: Path):
        self.data = {
            "command": command,
            "config": cfg,
            "seed": cfg["seed"],
            "toolkit_version": __version__,
            "artifacts": [],
            "stages_completed": [],
            "wall_clock_s": None,
        }
        self.out_dir = out_dir
        self._start = time.monotonic()

    def add(self, *paths):
        for p in paths:
            self.data["artifacts"].append(str(p))

    def stage_done(self, name: str):
        self.data["stages_completed"].append(name)

    def write(self):
        self.data["wall_clock_s"] = round(time.monotonic() - self._start, 3)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / "run_manifest.json"
        path.write_text(json.dumps(self.data, indent=2) + "\n")
        return path


# -- stage implementations ----------------------------------------------------


def _build_grid(cfg: dict):
    from .grid import BoundarySpec, irregular_grid, rectangular_grid

    g = cfg["grid"]
    bc = BoundarySpec.from_dict(g["bc"])
    if g["irregular"]:
        mask_seed = int(seeding.seed_sequence(cfg["seed"], "mask").generate_state(1)[0])
        return irregular_grid(
            g["height"], g["width"], mask_seed, bc, g["cell_size"], g["max_bite_frac"]
        )
    return rectangular_grid(g["height"], g["width"], bc, g["cell_size"])


def _kernel(cfg: dict, grid):
    from .kle import KernelConfig

    length_scale = cfg["kernel"]["length_scale"]
    if length_scale is None:
        length_scale = 0.2 * grid.width * grid.cell_size
    return KernelConfig(variance=cfg["kernel"]["variance"], length_scale=length_scale)


def _stage_generate(cfg: dict, out_dir: Path, manifest: _Manifest) -> Path:
    from .dataset import generate_dataset, save_dataset
    from .kle import build_kle

    grid = _build_grid(cfg)
    kernel = _kernel(cfg, grid)
    n_modes = cfg["kle_modes"] or min(grid.n_active, 1000)
    kle = build_kle(grid, kernel, n_modes)
    ds = generate_dataset(
        grid,
        kle,
        n_samples=cfg["dataset"]["n_samples"],
        n_wells=cfg["dataset"]["n_wells"],
        seed=cfg["seed"],
        train_fraction=cfg["dataset"]["train_fraction"],
        kernel=kernel,
    )
    ds_dir = save_dataset(ds, out_dir / "dataset")
    manifest.add(ds_dir / "manifest.json", ds_dir / "X.bin", ds_dir / "Y.bin", ds_dir / "mask.bin")
    manifest.stage_done("generate")
    print(f"dataset: {ds_dir}  X {ds.x.shape}  Y {ds.y.shape}  wells {ds.n_wells}")
    return ds_dir


def _load_dataset_arg(args, out_dir):
    from .dataset import load_dataset

    ds_path = Path(args.dataset) if getattr(args, "dataset", None) else out_dir / "dataset"
    return load_dataset(ds_path)


def _stage_cca(cfg: dict, ds, out_dir: Path, manifest: _Manifest) -> dict:
    import numpy as np

    from .cca import cev_curve, fit_cca, latent_dim_for_threshold, standardize
    from .evaluate import _pyplot

    x_train, y_train = ds.train_rows()
    (x_std,) = standardize(x_train.astype(np.float64))
    (y_std,) = standardize(y_train.astype(np.float64))
    res = fit_cca(x_std, y_std, eps=cfg["cca"]["eps"])
    curve = cev_curve(res)
    tau = cfg["cca"]["threshold"]
    latent_dim = latent_dim_for_threshold(res, tau)

    cca_dir = out_dir / "cca"
    cca_dir.mkdir(parents=True, exist_ok=True)
    csv_path = cca_dir / "cev.csv"
    lines = ["i,cev_normalized"] + [f"{i + 1},{v:.10g}" for i, v in enumerate(curve)]
    csv_path.write_text("\n".join(lines) + "\n")

    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(1, curve.size + 1), curve)
    ax.axhline(tau, color="r", linestyle="--", linewidth=1)
    ax.axvline(latent_dim, color="r", linestyle="--", linewidth=1)
    ax.set_xlabel("latent dimension")
    ax.set_ylabel("normalized cumulative explained variance")
    fig.tight_layout()
    png_path = cca_dir / "cev.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)

    summary = {
        "threshold": tau,
        "latent_dim": latent_dim,
        "explained_variance_ratio": res.explained_variance_ratio,
        "eps_x": res.eps_x,
    }
    summary_path = cca_dir / "cca_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2) + "\n")
    manifest.add(csv_path, png_path, summary_path)
    manifest.stage_done("cca")
    print(
        f"cca: latent_dim_for_threshold({tau}) = {latent_dim}  "
        f"(linear encoding explains {res.explained_variance_ratio:.1%} of output variance)"
    )
    return summary


def _arch_for(cfg: dict, ds):
    from .model import ArchConfig

    return ArchConfig(
        input_shape=ds.mask.shape,
        latent_dim=cfg["arch"]["latent_dim"],
        n_outputs=ds.n_wells,
        channel_schedule=tuple(cfg["arch"]["channel_schedule"]),
        decoder_hidden=cfg["arch"]["decoder_hidden"],
    )


def _train_cfg(cfg: dict):
    from .training import TrainConfig, as_schedule

    t = cfg["train"]
    return TrainConfig(
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        lr_init=t["lr_init"],
        lr_final=t["lr_final"],
        clip_norm=t["clip_norm"],
        beta=as_schedule(t["beta"]),
        lam=as_schedule(t["lambda"]),
        seed=cfg["seed"],
        train_size=t["train_size"],
        test_size=t["test_size"],
    )


def _stage_train(cfg: dict, ds, out_dir: Path, manifest: _Manifest):
    from .training import train

    run_dir = out_dir / "train"
    record = train(ds, _arch_for(cfg, ds), _train_cfg(cfg), run_dir)
    manifest.add(run_dir / "metrics.csv", run_dir / "metrics.json", record.checkpoint_path)
    manifest.stage_done("train")
    print(
        f"train: best test MSE {record.best_mse:.5f} (epoch {record.best_epoch}), "
        f"KLD {record.best_kld:.4f}  checkpoint {record.checkpoint_path}"
    )
    return record


def _stage_sweep(cfg: dict, ds, out_dir: Path, manifest: _Manifest) -> list[dict]:
    from .training import sweep

    sweep_dir = out_dir / "sweep"
    rows = sweep(
        ds,
        _arch_for(cfg, ds),
        _train_cfg(cfg),
        r_list=cfg["sweep"]["r"],
        beta_list=cfg["sweep"]["beta"],
        lambda_list=cfg["sweep"]["lambda"],
        out_dir=sweep_dir,
        share_seed=cfg["sweep"]["share_seed"],
    )
    manifest.add(sweep_dir / "sweep.csv")
    for row in rows:
        if row["checkpoint"]:
            manifest.add(row["checkpoint"])
    manifest.stage_done("sweep")
    for row in rows:
        flag = " *" if row["best_for_r"] else ""
        if row["status"] == "ok":
            print(
                f"sweep: r={row['r']:<4} beta={row['beta']:<5g} lambda={row['lambda']:<5g} "
                f"mse={row['best_mse']:.5f} kld={row['best_kld']:.4f}{flag}"
            )
        else:
            print(f"sweep: r={row['r']} beta={row['beta']} lambda={row['lambda']} FAILED: {row['error']}")
    return rows


def _load_checkpoint_arg(args, out_dir: Path):
    from .model import load_checkpoint

    ckpt = getattr(args, "checkpoint", None) or out_dir / "train" / "best.ckpt"
    ckpt = Path(ckpt)
    if not ckpt.exists():
        raise ConfigurationError(f"checkpoint not found: {ckpt}")
    return load_checkpoint(ckpt)


def _eval_inputs(ds, cfg):
    from .training import normalized_tensors

    _, _, test_imgs, test_y = normalized_tensors(ds, None, cfg["train"]["test_size"])
    return test_imgs, test_y


def _stage_eval(cfg: dict, ds, model, which: str, out_dir: Path, manifest: _Manifest):
    import numpy as np

    from .evaluate import (
        decode_noise,
        feature_report,
        latent_covariance,
        write_feature_report,
        write_generative_report,
        write_latent_covariance,
    )

    test_imgs, test_y = _eval_inputs(ds, cfg)
    eval_seed = seeding.torch_seed(cfg["seed"], "eval", which)
    eval_dir = out_dir / which
    if which == "eval-recon":
        report = feature_report(
            model, test_imgs, test_y, seed=eval_seed, n_top=cfg["eval"]["n_top"]
        )
        paths = write_feature_report(report, eval_dir)
        print(
            f"eval-recon: median RMSE {float(np.median(report.rmse)):.4f}  "
            f"best {report.best_features.tolist()}  worst {report.worst_features.tolist()}"
        )
    elif which == "eval-decode":
        report = decode_noise(model, test_y, seed=eval_seed)
        paths = write_generative_report(report, eval_dir)
        print(f"eval-decode: moment-mismatch score {report.score:.4f} ({report.n_samples} samples)")
    else:
        report = latent_covariance(model, test_imgs, seed=eval_seed)
        paths = write_latent_covariance(report, eval_dir)
        print(
            f"eval-cov: off-diagonal energy {report.off_diag_energy:.4f}, "
            f"diagonal deviation {report.diag_deviation:.4f}"
        )
    manifest.add(*paths)
    manifest.stage_done(which)
    return report


# -- command dispatch ---------------------------------------------------------


def _out_dir(args) -> Path:
    return Path(args.out) if args.out else Path("runs/latest")


def cmd_generate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = _out_dir(args)
    manifest = _Manifest("generate", cfg, out_dir)
    _stage_generate(cfg, out_dir, manifest)
    manifest.write()
    return EXIT_OK


def cmd_cca(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = _out_dir(args)
    manifest = _Manifest("cca", cfg, out_dir)
    ds = _load_dataset_arg(args, out_dir)
    _stage_cca(cfg, ds, out_dir, manifest)
    manifest.write()
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = _out_dir(args)
    manifest = _Manifest("train", cfg, out_dir)
    ds = _load_dataset_arg(args, out_dir)
    _stage_train(cfg, ds, out_dir, manifest)
    manifest.write()
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = _out_dir(args)
    manifest = _Manifest("sweep", cfg, out_dir)
    ds = _load_dataset_arg(args, out_dir)
    _stage_sweep(cfg, ds, out_dir, manifest)
    manifest.write()
    return EXIT_OK


def cmd_eval(args, which: str) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = _out_dir(args)
    manifest = _Manifest(which, cfg, out_dir)
    ds = _load_dataset_arg(args, out_dir)
    model, _ = _load_checkpoint_arg(args, out_dir)
    _stage_eval(cfg, ds, model, which, out_dir, manifest)
    manifest.write()
    return EXIT_OK


def cmd_pipeline(args) -> int:
    from .dataset import load_dataset
    from .model import load_checkpoint

    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = _out_dir(args)
    manifest = _Manifest("pipeline", cfg, out_dir)
    try:
        ds_dir = _stage_generate(cfg, out_dir, manifest)
        ds = load_dataset(ds_dir)
        _stage_cca(cfg, ds, out_dir, manifest)
        rows = _stage_sweep(cfg, ds, out_dir, manifest)
        ok_rows = [row for row in rows if row["status"] == "ok"]
        if not ok_rows:
            raise NumericalError("every sweep cell failed; see sweep.csv")
        best = min(ok_rows, key=lambda row: row["best_mse"])
        print(
            f"pipeline: evaluating best cell r={best['r']} beta={best['beta']} "
            f"lambda={best['lambda']}"
        )
        model, _ = load_checkpoint(best["checkpoint"])
        for which in ("eval-recon", "eval-decode", "eval-cov"):
            _stage_eval(cfg, ds, model, which, out_dir, manifest)
    finally:
        # Partial artifacts stay on disk and stay listed, even on stage failure.
        manifest.write()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vedflow",
        description="Surrogate-modeling toolkit: synthetic groundwater datasets, "
        "CCA latent-dimension estimates, and variational encoder-decoder training.",
    )
    parser.add_argument("--version", action="version", version=f"vedflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=False, checkpoint=False, overrides=False):
        p.add_argument("--config", help="JSON config file (defaults apply if omitted)")
        p.add_argument("--seed", type=int, help="root seed override")
        p.add_argument("--out", help="run directory (default runs/latest)")
        if dataset:
            p.add_argument("--dataset", help="dataset directory (default <out>/dataset)")
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint file (default <out>/train/best.ckpt)")
        if overrides:
            p.add_argument("--r", type=int, help="latent dimension override")
            p.add_argument("--beta", type=float, help="KL weight override")
            p.add_argument("--lambda", type=float, dest="lam", help="covariance weight override")
            p.add_argument("--epochs", type=int, help="epoch count override")
            p.add_argument("--train-size", type=int, help="cap on training rows")

    common(sub.add_parser("generate", help="generate a synthetic dataset directory"))
    common(sub.add_parser("cca", help="CCA latent-dimension estimate"), dataset=True)
    common(sub.add_parser("train", help="train one VED"), dataset=True, overrides=True)
    common(sub.add_parser("sweep", help="train an (r, beta, lambda) grid"), dataset=True, overrides=True)
    for name, text in (
        ("eval-recon", "per-feature reconstruction report"),
        ("eval-decode", "decoded-noise generative report"),
        ("eval-cov", "latent-code covariance report"),
    ):
        common(sub.add_parser(name, help=text), dataset=True, checkpoint=True)
    common(sub.add_parser("pipeline", help="run generate, cca, sweep, and eval"), overrides=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _apply_thread_cap()
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "cca":
            return cmd_cca(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command in ("eval-recon", "eval-decode", "eval-cov"):
            return cmd_eval(args, args.command)
        return cmd_pipeline(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except VedflowError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
