"""Steady saturated-flow solver on the cell-centered finite-volume grid.

Solves div(T grad u) = 0 with T = exp(log_T), harmonic-mean face
transmissivities between neighbouring cells, and per-side Dirichlet/no-flow
boundary conditions. Dirichlet faces use the half-cell distance, i.e. a face
conductance of 2*T_cell, which makes the constant-T solution exactly linear
at the discrete level.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionError, NumericalError, WellPosednessError
from .grid import FlowGrid

_RESIDUAL_TOL = 1e-10


def _broadcast_t(grid: FlowGrid, log_t: np.ndarray) -> np.ndarray:
    log_t = np.asarray(log_t, dtype=np.float64)
    if log_t.shape != (grid.n_active,):
        raise DimensionError(
            f"log_T has shape {log_t.shape}, expected ({grid.n_active},)"
        )
    if not np.all(np.isfinite(log_t)):
        raise NumericalError("log_T contains non-finite entries")
    t_map = np.zeros((grid.height, grid.width))
    t_map[grid.active_mask] = np.exp(log_t)
    return t_map


def assemble_system(grid: FlowGrid, log_t: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Assemble the SPD linear system A u = b for the active-cell heads."""
    mask = grid.active_mask
    ids = grid.active_ids()
    n = grid.n_active
    t_map = _broadcast_t(grid, log_t)

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    diag = np.zeros(n)
    b = np.zeros(n)

    # Interior faces: harmonic mean of the two adjacent transmissivities.
    for axis in (0, 1):
        if axis == 1:
            pair = mask[:, :-1] & mask[:, 1:]
            ti, tj = t_map[:, :-1][pair], t_map[:, 1:][pair]
            i, j = ids[:, :-1][pair], ids[:, 1:][pair]
        else:
            pair = mask[:-1, :] & mask[1:, :]
            ti, tj = t_map[:-1, :][pair], t_map[1:, :][pair]
            i, j = ids[:-1, :][pair], ids[1:, :][pair]
        w = 2.0 * ti * tj / (ti + tj)
        np.add.at(diag, i, w)
        np.add.at(diag, j, w)
        rows.extend([i, j])
        cols.extend([j, i])
        vals.extend([-w, -w])

    # Boundary faces: Dirichlet contributes through the half-cell distance.
    n_dirichlet_faces = 0
    for side in ("left", "right", "top", "bottom"):
        value = grid.bc.value(side)
        if value is None:
            continue
        faces = grid.boundary_faces(side)
        i = ids[faces]
        w = 2.0 * t_map[faces]
        np.add.at(diag, i, w)
        b[i] += w * value
        n_dirichlet_faces += i.size

    if n_dirichlet_faces == 0:
        raise WellPosednessError("all boundaries are no-flow; the system is singular")

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    a = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return a, b


def solve_flow(grid: FlowGrid, log_t: np.ndarray) -> np.ndarray:
    """Heads at all active cells; relative residual is verified <= 1e-10."""
    a, b = assemble_system(grid, log_t)
    heads = spla.spsolve(a, b)
    scale = np.linalg.norm(b)
    residual = np.linalg.norm(a @ heads - b) / (scale if scale > 0 else 1.0)
    if not np.isfinite(heads).all() or residual > _RESIDUAL_TOL:
        raise NumericalError(
            f"flow solve failed: relative residual {residual:.3e} > {_RESIDUAL_TOL:.0e}"
        )
    return heads


def face_flux_sums(grid: FlowGrid, log_t: np.ndarray, heads: np.ndarray) -> np.ndarray:
    """Net signed outflow per active cell, recomputed face by face.

    Interior conservation diagnostic: for non-Dirichlet cells the result is the
    discrete mass balance and should vanish at the solver's residual level.
    """
    heads = np.asarray(heads, dtype=np.float64)
    if heads.shape != (grid.n_active,):
        raise DimensionError(f"heads has shape {heads.shape}, expected ({grid.n_active},)")
    mask = grid.active_mask
    ids = grid.active_ids()
    t_map = _broadcast_t(grid, log_t)
    u_map = np.zeros((grid.height, grid.width))
    u_map[mask] = heads

    net = np.zeros(grid.n_active)
    for axis in (0, 1):
        if axis == 1:
            pair = mask[:, :-1] & mask[:, 1:]
            ti, tj = t_map[:, :-1][pair], t_map[:, 1:][pair]
            ui, uj = u_map[:, :-1][pair], u_map[:, 1:][pair]
            i, j = ids[:, :-1][pair], ids[:, 1:][pair]
        else:
            pair = mask[:-1, :] & mask[1:, :]
            ti, tj = t_map[:-1, :][pair], t_map[1:, :][pair]
            ui, uj = u_map[:-1, :][pair], u_map[1:, :][pair]
            i, j = ids[:-1, :][pair], ids[1:, :][pair]
        flux = 2.0 * ti * tj / (ti + tj) * (ui - uj)  # flow from i to j
        np.add.at(net, i, flux)
        np.add.at(net, j, -flux)
    for side in ("left", "right", "top", "bottom"):
        value = grid.bc.value(side)
        if value is None:
            continue
        faces = grid.boundary_faces(side)
        i = ids[faces]
        np.add.at(net, i, 2.0 * t_map[faces] * (u_map[faces] - value))
    return net
