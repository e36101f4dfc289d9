"""vedflow: variational encoder-decoder surrogates for groundwater-flow responses.

The package covers the full workflow: synthetic dataset generation (KL random
fields + finite-volume flow solves), a CCA latent-dimension baseline, the
residual-convolutional variational encoder-decoder with its composite loss,
the training/sweep harness, and post-training generative diagnostics.

Submodules are imported lazily so lightweight uses (CLI help, dataset I/O)
do not pay the torch import cost.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # grid / flow
    "BoundarySpec": "grid",
    "FlowGrid": "grid",
    "rectangular_grid": "grid",
    "irregular_grid": "grid",
    "corner_bite_mask": "grid",
    "solve_flow": "flow",
    "assemble_system": "flow",
    "face_flux_sums": "flow",
    # random fields
    "KernelConfig": "kle",
    "KLEBasis": "kle",
    "kernel_matrix": "kle",
    "build_kle": "kle",
    "sample_log_transmissivity": "kle",
    "sample_fields": "kle",
    # datasets
    "Dataset": "dataset",
    "NormStats": "dataset",
    "generate_dataset": "dataset",
    "save_dataset": "dataset",
    "load_dataset": "dataset",
    "draw_wells": "dataset",
    # grid map
    "GridMap": "gridmap",
    "map_to_grid": "gridmap",
    "grid_to_vector": "gridmap",
    # cca
    "CCAResult": "cca",
    "fit_cca": "cca",
    "cev_curve": "cca",
    "latent_dim_for_threshold": "cca",
    "standardize": "cca",
    # model
    "ArchConfig": "model",
    "VED": "model",
    "Encoder": "model",
    "Decoder": "model",
    "ResidualBlock": "model",
    "reparameterize": "model",
    "build_model": "model",
    "save_checkpoint": "model",
    "load_checkpoint": "model",
    # losses
    "LossBreakdown": "losses",
    "mse_loss": "losses",
    "kld_loss": "losses",
    "aggregate_cov": "losses",
    "cov_penalty": "losses",
    "total_loss": "losses",
    # training
    "Schedule": "training",
    "schedule_value": "training",
    "as_schedule": "training",
    "cosine_lr": "training",
    "TrainConfig": "training",
    "MetricsRecord": "training",
    "train": "training",
    "sweep": "training",
    "normalized_tensors": "training",
    "evaluate_split": "training",
    # evaluation
    "FeatureReport": "evaluate",
    "GenerativeReport": "evaluate",
    "LatentCovarianceReport": "evaluate",
    "feature_report": "evaluate",
    "decode_noise": "evaluate",
    "latent_covariance": "evaluate",
    "kde_curve": "evaluate",
}

__all__ = sorted(_EXPORTS) + ["__version__", "errors", "seeding"]


def __getattr__(name: str):
    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        value = getattr(module, name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return __all__
