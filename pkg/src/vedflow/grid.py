"""Finite-volume grid geometry for the synthetic aquifer.

A :class:`FlowGrid` is an H x W Cartesian grid of square cells from which an
irregular active region is carved by a boolean mask. Boundary conditions are
attached per face orientation: any active-cell face whose neighbour is missing
(outside the rectangle or masked off) is a boundary face and inherits the
Dirichlet head or no-flow condition of the side it points to. With a fully
rectangular mask this reduces to the usual edge conditions; with corner bites
the bite edges inherit the side condition as well.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, WellPosednessError

# (drow, dcol, side) for the four faces of a cell; rows grow downward.
_FACES = (
    (0, -1, "left"),
    (0, 1, "right"),
    (-1, 0, "top"),
    (1, 0, "bottom"),
)


@dataclass(frozen=True)
class BoundarySpec:
    """Per-side condition: a Dirichlet head value, or None for no-flow."""

    left: Optional[float] = 1.0
    right: Optional[float] = 0.0
    top: Optional[float] = None
    bottom: Optional[float] = None

    def value(self, side: str) -> Optional[float]:
        return getattr(self, side)

    def dirichlet_values(self) -> list[float]:
        return [v for v in (self.left, self.right, self.top, self.bottom) if v is not None]

    def to_dict(self) -> dict:
        return {"left": self.left, "right": self.right, "top": self.top, "bottom": self.bottom}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundarySpec":
        return cls(**{k: d.get(k) for k in ("left", "right", "top", "bottom")})


@dataclass(frozen=True)
class FlowGrid:
    """Cell-centered finite-volume grid with an irregular active region.

    Attributes:
        height, width: rectangle dimensions in cells.
        cell_size: edge length of the square cells.
        active_mask: (height, width) booleans, True where the aquifer exists.
        bc: per-side boundary conditions.
    """

    height: int
    width: int
    active_mask: np.ndarray
    bc: BoundarySpec = field(default_factory=BoundarySpec)
    cell_size: float = 1.0

    def __post_init__(self):
        mask = np.asarray(self.active_mask, dtype=bool)
        if mask.shape != (self.height, self.width):
            raise ConfigurationError(
                f"active_mask shape {mask.shape} != (height, width) = "
                f"({self.height}, {self.width})"
            )
        if self.cell_size <= 0:
            raise ConfigurationError("cell_size must be positive")
        object.__setattr__(self, "active_mask", mask)
        if self.n_active == 0:
            raise ConfigurationError("grid has no active cells")
        if not self._is_connected():
            raise ConfigurationError("active cells must form a single connected component")
        if len(self.dirichlet_cells()) < 2:
            raise WellPosednessError(
                "flow problem needs at least two Dirichlet boundary cells; "
                f"bc = {self.bc.to_dict()}"
            )

    # -- derived geometry -------------------------------------------------

    @property
    def n_active(self) -> int:
        return int(self.active_mask.sum())

    def active_ids(self) -> np.ndarray:
        """(H, W) int map: active-cell index in row-major order, -1 elsewhere."""
        ids = np.full((self.height, self.width), -1, dtype=np.int64)
        ids[self.active_mask] = np.arange(self.n_active)
        return ids

    def cell_centers(self) -> np.ndarray:
        """(n, 2) array of (x, y) centers of active cells, row-major order."""
        rows, cols = np.nonzero(self.active_mask)
        x = (cols + 0.5) * self.cell_size
        y = (rows + 0.5) * self.cell_size
        return np.column_stack([x, y])

    def boundary_faces(self, side: str) -> np.ndarray:
        """(H, W) booleans: active cells with a boundary face toward ``side``."""
        mask = self.active_mask
        drow, dcol = {"left": (0, -1), "right": (0, 1), "top": (-1, 0), "bottom": (1, 0)}[side]
        out = mask.copy()
        if dcol == -1:
            out[:, 1:] &= ~mask[:, :-1]
        elif dcol == 1:
            out[:, :-1] &= ~mask[:, 1:]
        elif drow == -1:
            out[1:, :] &= ~mask[:-1, :]
        else:
            out[:-1, :] &= ~mask[1:, :]
        return out

    def dirichlet_cells(self) -> np.ndarray:
        """Sorted active-cell indices of cells touching any Dirichlet face."""
        ids = self.active_ids()
        hit = np.zeros((self.height, self.width), dtype=bool)
        for _, _, side in _FACES:
            if self.bc.value(side) is not None:
                hit |= self.boundary_faces(side)
        return np.sort(ids[hit])

    def _is_connected(self) -> bool:
        mask = self.active_mask
        start = tuple(np.argwhere(mask)[0])
        seen = np.zeros_like(mask)
        seen[start] = True
        queue = deque([start])
        while queue:
            r, c = queue.popleft()
            for dr, dc, _ in _FACES:
                rr, cc = r + dr, c + dc
                if 0 <= rr < self.height and 0 <= cc < self.width:
                    if mask[rr, cc] and not seen[rr, cc]:
                        seen[rr, cc] = True
                        queue.append((rr, cc))
        return bool(seen.sum() == mask.sum())

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "cell_size": self.cell_size,
            "bc": self.bc.to_dict(),
        }


def rectangular_grid(
    height: int, width: int, bc: BoundarySpec | None = None, cell_size: float = 1.0
) -> FlowGrid:
    """Fully active rectangular grid."""
    mask = np.ones((height, width), dtype=bool)
    return FlowGrid(height, width, mask, bc or BoundarySpec(), cell_size)


def corner_bite_mask(height: int, width: int, seed: int, max_bite_frac: float = 0.3) -> np.ndarray:
    """Rectangle minus random rectangular bites at the four corners.

    Bite sides are capped at ``max_bite_frac`` of the grid dimensions so the
    remaining region is always a single connected component.
    """
    if not 0 < max_bite_frac < 0.5:
        raise ConfigurationError("max_bite_frac must lie in (0, 0.5)")
    gen = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6D61736B]))
    mask = np.ones((height, width), dtype=bool)
    max_h = max(1, int(height * max_bite_frac))
    max_w = max(1, int(width * max_bite_frac))
    for vert in ("top", "bottom"):
        for horiz in ("left", "right"):
            bh = int(gen.integers(0, max_h + 1))
            bw = int(gen.integers(0, max_w + 1))
            if bh == 0 or bw == 0:
                continue
            rows = slice(0, bh) if vert == "top" else slice(height - bh, height)
            cols = slice(0, bw) if horiz == "left" else slice(width - bw, width)
            mask[rows, cols] = False
    return mask


def irregular_grid(
    height: int,
    width: int,
    seed: int,
    bc: BoundarySpec | None = None,
    cell_size: float = 1.0,
    max_bite_frac: float = 0.3,
) -> FlowGrid:
    """Seeded irregular grid: rectangle with random corner bites removed."""
    mask = corner_bite_mask(height, width, seed, max_bite_frac)
    return FlowGrid(height, width, mask, bc or BoundarySpec(), cell_size)
