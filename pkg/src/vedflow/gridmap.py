"""Mapping between active-cell vectors and masked Cartesian images.

Convolutional encoders need rectangular inputs, so an n-vector of active-cell
values is scattered onto its H x W grid with inactive pixels held at a fill
value (0 after normalization, i.e. the per-feature mean). ``grid_to_vector``
is the exact inverse on the active positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class GridMap:
    """Scatter/gather between length-n vectors and (H, W) images.

    Attributes:
        height, width: image dimensions.
        mask: (H, W) booleans, True at the n active positions.
        fill_value: value written to inactive pixels.
    """

    height: int
    width: int
    mask: np.ndarray
    fill_value: float = 0.0

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.height, self.width):
            raise DimensionError(
                f"mask shape {mask.shape} != (height, width) = ({self.height}, {self.width})"
            )
        object.__setattr__(self, "mask", mask)

    @property
    def n_active(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def from_mask(cls, mask: np.ndarray, fill_value: float = 0.0) -> "GridMap":
        mask = np.asarray(mask, dtype=bool)
        return cls(mask.shape[0], mask.shape[1], mask, fill_value)


def map_to_grid(x: np.ndarray, gm: GridMap) -> np.ndarray:
    """Scatter vectors of active-cell values onto masked images.

    Accepts a single (n,) vector or any batch shape (..., n); returns
    (..., H, W) with inactive pixels set to ``gm.fill_value``.
    """
    x = np.asarray(x)
    if x.shape[-1] != gm.n_active:
        raise DimensionError(
            f"last axis has length {x.shape[-1]}, expected n = {gm.n_active}"
        )
    out = np.full(x.shape[:-1] + (gm.height, gm.width), gm.fill_value, dtype=x.dtype)
    out[..., gm.mask] = x
    return out


def grid_to_vector(img: np.ndarray, gm: GridMap) -> np.ndarray:
    """Gather active-position values from (..., H, W) images in mask order."""
    img = np.asarray(img)
    if img.shape[-2:] != (gm.height, gm.width):
        raise DimensionError(
            f"image shape {img.shape[-2:]} != (H, W) = ({gm.height}, {gm.width})"
        )
    return img[..., gm.mask]
