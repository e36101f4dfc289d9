"""Variational encoder-decoder: residual conv encoder, Gaussian latent, FC decoder.

The encoder is a stride-2 conv stem followed by units of [1x1 channel-raising
conv + residual block], each block halving the spatial size, ending in two
fully connected heads for the latent mean and log-variance. The decoder is
deliberately shallow: one hidden fully connected layer with batch norm, then
the output layer. All layers are shape-parametric; final spatial dimensions
are computed from the input shape, never hard-coded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError, DimensionError, NumericalError

_CONV_KERNEL = 3
_CONV_PAD = 1
_LOGVAR_CLAMP = 10.0
_CHECKPOINT_FORMAT = "vedflow-checkpoint-v1"


def _down(size: int) -> int:
    """Output length of one stride-2 conv with kernel 3, padding 1."""
    return (size + 2 * _CONV_PAD - _CONV_KERNEL) // 2 + 1


@dataclass(frozen=True)
class ArchConfig:
    """Architecture hyperparameters.

    Attributes:
        input_shape: (H, W) of the masked input image.
        latent_dim: r, size of the latent code.
        n_outputs: m, number of response features.
        channel_schedule: channel widths across the encoder; entry 0 is the
            input channel count. One stride-2 stage per transition, so the
            default 6-entry schedule implies five spatial halvings.
        decoder_hidden: width of the decoder's single hidden layer.
    """

    input_shape: tuple[int, int]
    latent_dim: int
    n_outputs: int
    channel_schedule: tuple[int, ...] = (1, 16, 32, 64, 128, 256)
    decoder_hidden: int = 512

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "channel_schedule", tuple(self.channel_schedule))
        if self.latent_dim < 1:
            raise ConfigurationError("latent_dim must be >= 1")
        if self.n_outputs < 1:
            raise ConfigurationError("n_outputs must be >= 1")
        if len(self.channel_schedule) < 3:
            raise ConfigurationError("channel_schedule needs at least 3 entries")
        if any(b <= a for a, b in zip(self.channel_schedule, self.channel_schedule[1:])):
            raise ConfigurationError("channel_schedule must be strictly increasing")
        if self.decoder_hidden < 1:
            raise ConfigurationError("decoder_hidden must be >= 1")
        h, w = self.stage_shapes()[-1]
        if h < 1 or w < 1:
            raise ConfigurationError(
                f"input {self.input_shape} collapses below 1x1 after "
                f"{self.n_stages} stride-2 stages"
            )

    @property
    def n_res_blocks(self) -> int:
        return len(self.channel_schedule) - 2

    @property
    def n_stages(self) -> int:
        """Stride-2 stages: the stem plus one per residual block."""
        return self.n_res_blocks + 1

    def stage_shapes(self) -> list[tuple[int, int]]:
        """(H, W) after each stride-2 stage (kernel 3, padding 1 throughout)."""
        h, w = self.input_shape
        shapes = []
        for _ in range(self.n_stages):
            h, w = _down(h), _down(w)
            shapes.append((h, w))
        return shapes

    @property
    def flat_features(self) -> int:
        h, w = self.stage_shapes()[-1]
        return self.channel_schedule[-1] * h * w

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "latent_dim": self.latent_dim,
            "n_outputs": self.n_outputs,
            "channel_schedule": list(self.channel_schedule),
            "decoder_hidden": self.decoder_hidden,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(
            input_shape=tuple(d["input_shape"]),
            latent_dim=int(d["latent_dim"]),
            n_outputs=int(d["n_outputs"]),
            channel_schedule=tuple(d["channel_schedule"]),
            decoder_hidden=int(d["decoder_hidden"]),
        )


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with batch norm, stride 2 at the first, plus a
    1x1 stride-2 projection shortcut; channel count is preserved."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, _CONV_KERNEL, stride=2, padding=_CONV_PAD)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, _CONV_KERNEL, stride=1, padding=_CONV_PAD)
        self.bn2 = nn.BatchNorm2d(channels)
        self.proj = nn.Conv2d(channels, channels, 1, stride=2)
        self.act = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.act(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.act(out + self.proj(x))


class Encoder(nn.Module):
    """Conv stem + residual units, flattened into mean/log-variance heads."""

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        sched = arch.channel_schedule
        self.stem = nn.Sequential(
            nn.Conv2d(sched[0], sched[1], _CONV_KERNEL, stride=2, padding=_CONV_PAD),
            nn.BatchNorm2d(sched[1]),
            nn.ReLU(),
        )
        units = []
        for c_in, c_out in zip(sched[1:], sched[2:]):
            units.append(
                nn.Sequential(
                    nn.Conv2d(c_in, c_out, 1),
                    nn.BatchNorm2d(c_out),
                    nn.ReLU(),
                    ResidualBlock(c_out),
                )
            )
        self.units = nn.ModuleList(units)
        self.fc_mean = nn.Linear(arch.flat_features, arch.latent_dim)
        self.fc_log_var = nn.Linear(arch.flat_features, arch.latent_dim)

    def conv_layer_count(self, include_projections: bool = False) -> int:
        """Convolutions in the feature extractor; the default count excludes
        the 1x1 projection shortcuts (stem + per unit: raise + 2 block convs)."""
        count = 1 + len(self.units) * 3
        if include_projections:
            count += len(self.units)
        return count

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out = self.stem(x)
        for unit in self.units:
            out = unit(out)
        flat = out.flatten(start_dim=1)
        mean = self.fc_mean(flat)
        log_var = torch.clamp(self.fc_log_var(flat), -_LOGVAR_CLAMP, _LOGVAR_CLAMP)
        return mean, log_var


class Decoder(nn.Module):
    """Shallow FC decoder: latent -> hidden (+ batch norm, ReLU) -> outputs."""

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.fc_hidden = nn.Linear(arch.latent_dim, arch.decoder_hidden)
        self.bn = nn.BatchNorm1d(arch.decoder_hidden)
        self.act = nn.ReLU()
        self.fc_out = nn.Linear(arch.decoder_hidden, arch.n_outputs)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.fc_out(self.act(self.bn(self.fc_hidden(z))))


def reparameterize(mean: torch.Tensor, log_var: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """z = mean + eps * exp(log_var / 2), elementwise."""
    if eps.shape != mean.shape or log_var.shape != mean.shape:
        raise DimensionError(
            f"shape mismatch: mean {tuple(mean.shape)}, log_var {tuple(log_var.shape)}, "
            f"eps {tuple(eps.shape)}"
        )
    return mean + eps * torch.exp(0.5 * log_var)


class VED(nn.Module):
    """Full variational encoder-decoder with a single latent sample per row."""

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        self.encoder = Encoder(arch)
        self.decoder = Decoder(arch)

    @property
    def latent_dim(self) -> int:
        return self.arch.latent_dim

    @property
    def n_outputs(self) -> int:
        return self.arch.n_outputs

    def _check_batch(self, batch: int, what: str):
        if batch < 1:
            raise DimensionError(f"{what} batch is empty")
        if self.training and batch < 2:
            raise DimensionError(f"{what} needs a batch of >= 2 in train mode (batch norm)")

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        expected = (self.arch.channel_schedule[0], *self.arch.input_shape)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise DimensionError(
                f"encoder input shape {tuple(x.shape)} != (B, {expected[0]}, "
                f"{expected[1]}, {expected[2]})"
            )
        self._check_batch(x.shape[0], "encode")
        mean, log_var = self.encoder(x)
        if not torch.isfinite(mean).all():
            raise NumericalError("non-finite activations at encoder mean head (fc_mean)")
        if not torch.isfinite(log_var).all():
            raise NumericalError("non-finite activations at encoder log-variance head (fc_log_var)")
        return mean, log_var

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        if z.dim() != 2 or z.shape[1] != self.arch.latent_dim:
            raise DimensionError(
                f"decoder input shape {tuple(z.shape)} != (B, {self.arch.latent_dim})"
            )
        self._check_batch(z.shape[0], "decode")
        return self.decoder(z)

    def forward(
        self,
        x: torch.Tensor,
        eps: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        """Encode, draw one latent sample per row, decode.

        Returns (y_hat, mean, log_var, z). ``eps`` overrides the draw (used
        for deterministic paths and gradient checks); otherwise standard
        normal noise is drawn from ``generator``.
        """
        mean, log_var = self.encode(x)
        if eps is None:
            eps = torch.randn(
                mean.shape, generator=generator, dtype=mean.dtype, device=mean.device
            )
        z = reparameterize(mean, log_var, eps)
        return self.decode(z), mean, log_var, z


def build_model(arch: ArchConfig, init_seed: int) -> VED:
    """Construct a VED with seed-controlled default (fan-in uniform) init."""
    torch.manual_seed(init_seed)
    return VED(arch)


# -- checkpoint file format -------------------------------------------------
#
# [8-byte little-endian uint64: manifest length] [manifest JSON, utf-8]
# [tensor payloads, float32 little-endian row-major, manifest order]
# Integer buffers (batch norm's num_batches_tracked) are stored as f32 and
# restored to their original dtype; exact for realistic step counts.


def save_checkpoint(
    model: VED, path: str | Path, step: int = 0, metrics: dict | None = None
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    tensors = []
    payloads = []
    for name, tensor in state.items():
        array = tensor.detach().cpu().numpy()
        tensors.append(
            {"name": name, "shape": list(array.shape), "orig_dtype": str(array.dtype)}
        )
        payloads.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    manifest = {
        "format": _CHECKPOINT_FORMAT,
        "arch": model.arch.to_dict(),
        "step": step,
        "metrics": metrics or {},
        "tensors": tensors,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for payload in payloads:
            fh.write(payload)
    return path


def load_checkpoint(path: str | Path) -> tuple[VED, dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise ConfigurationError(f"truncated checkpoint {path}")
        manifest = json.loads(fh.read(int.from_bytes(header, "little")).decode("utf-8"))
        if manifest.get("format") != _CHECKPOINT_FORMAT:
            raise ConfigurationError(
                f"unrecognized checkpoint format {manifest.get('format')!r}"
            )
        arch = ArchConfig.from_dict(manifest["arch"])
        model = VED(arch)
        state = {}
        for entry in manifest["tensors"]:
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            raw = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(entry["shape"])
            state[entry["name"]] = torch.from_numpy(
                raw.astype(entry["orig_dtype"], copy=True)
            )
    model.load_state_dict(state)
    model.eval()
    return model, manifest
