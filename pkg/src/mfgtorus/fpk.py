"""Forward Fokker-Planck solve for the controlled density.

Solves ``d rho/dt - div(rho v) = lap rho / 2`` with ``rho(0) = mu``: the
particles drift with velocity ``-v``.  One grid step is Strang split into a
half diffusion step (exact, Fourier), an advection step and another half
diffusion step.  Advection uses a conservative finite-volume update with
van Leer limited MUSCL reconstruction, upwind face fluxes and SSP-RK2 time
stepping, sub-stepped to respect the CFL limit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .grid import TorusGrid, divergence, heat_multiplier, heat_step, laplacian, time_derivative
from .measures import masses
from .reports import ResidualReport

logger = logging.getLogger(__name__)

MASS_DRIFT_TOL = 1e-10


class CFLError(RuntimeError):
    def __init__(self, required: int, allowed: int):
        super().__init__(
            f"CFL condition needs {required} advection sub-steps per time step (limit {allowed}); increase M"
        )
        self.required = required


class MassConservationError(RuntimeError):
    pass


@dataclass
class FpkSolution:
    rho: np.ndarray
    clip_mass: float
    max_mass_error: float
    substeps: int


def _van_leer(dm: np.ndarray, dp: np.ndarray) -> np.ndarray:
    prod = dm * dp
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(prod > 0.0, 2.0 * prod / (dm + dp), 0.0)
    return s


def _advection_rate(rho: np.ndarray, faces: list[np.ndarray], d: int, dx: float) -> np.ndarray:
    """``-div(a rho)`` with ``a`` given at the upper faces of each cell along every axis."""
    out = np.zeros_like(rho)
    for k in range(d):
        ax = k
        up = np.roll(rho, -1, axis=ax)
        dn = np.roll(rho, 1, axis=ax)
        slope = _van_leer(rho - dn, up - rho)
        left = rho + 0.5 * slope               # value just below face i+1/2
        right = np.roll(rho - 0.5 * slope, -1, axis=ax)  # value just above face i+1/2
        a = faces[k]
        flux = np.where(a > 0.0, a * left, a * right)
        out -= (flux - np.roll(flux, 1, axis=ax)) / dx
    return out


def _face_velocities(v_slice: np.ndarray, d: int) -> list[np.ndarray]:
    # drift a = -v, averaged onto upper faces
    faces = []
    for k in range(d):
        a = -v_slice[k]
        faces.append(0.5 * (a + np.roll(a, -1, axis=k)))
    return faces


def advection_substeps(v: np.ndarray, grid: TorusGrid, cfl: float) -> int:
    """Sub-steps per grid step so that ``sum_k max|v_k| * tau <= cfl * dx``."""
    axes = tuple(a for a in range(v.ndim) if a != 1)
    speed = float(np.sum(np.max(np.abs(v), axis=axes)))
    return max(1, math.ceil(speed * grid.dt / (cfl * grid.dx) - 1e-12))


def solve_initial_value(v: np.ndarray, mu: np.ndarray, grid: TorusGrid, *, cfl: float = 0.25,
                        max_substeps: int = 10_000, clip_budget: float = 1e-12) -> FpkSolution:
    """Evolve ``mu`` forward under drift ``-v`` and diffusion ``lap / 2``.

    Args:
        v: vector flow ``(M+1, d, N...)``.
        mu: initial density slice, renormalized to unit mass before use.
        cfl: advection Courant number per sub-step (must not exceed 0.9).
        max_substeps: largest admissible advection sub-step count per grid step.
        clip_budget: total clipped negative mass above which a warning is logged.

    Raises:
        CFLError: if more than ``max_substeps`` sub-steps would be needed.
        MassConservationError: if a slice drifts from unit mass by more than 1e-10.
    """
    if not 0.0 < cfl <= 0.9:
        raise ValueError("cfl must lie in (0, 0.9]")
    v = np.asarray(v, dtype=float)
    if v.shape != grid.vector_shape():
        raise ValueError(f"v must have shape {grid.vector_shape()}, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("v must be finite")
    d, M, dt, dx = grid.d, grid.M, grid.dt, grid.dx
    mu = np.asarray(mu, dtype=float)
    mu = mu / (mu.sum() * grid.cell_volume)
    n_sub = advection_substeps(v, grid, cfl)
    if n_sub > max_substeps:
        raise CFLError(n_sub, max_substeps)
    tau = dt / n_sub
    half = heat_multiplier(grid.N, d, 0.5 * dt)
    rho = np.empty(grid.scalar_shape())
    rho[0] = mu
    cur = mu.copy()
    still = not np.any(v)
    clip_total = 0.0
    worst = 0.0
    for k in range(M):
        cur = heat_step(cur, d, 0.5 * dt, half)
        if not still:
            for j in range(n_sub):
                a = (j + 0.5) / n_sub
                vs = v[k] + a * (v[k + 1] - v[k])
                faces = _face_velocities(vs, d)
                stage = cur + tau * _advection_rate(cur, faces, d, dx)
                cur = 0.5 * cur + 0.5 * (stage + tau * _advection_rate(stage, faces, d, dx))
        cur = heat_step(cur, d, 0.5 * dt, half)
        neg = cur < 0.0
        if np.any(neg):
            before = cur.sum()
            clip_total += float(-cur[neg].sum() * grid.cell_volume)
            cur = np.where(neg, 0.0, cur)
            cur *= before / cur.sum()
        err = abs(float(cur.sum() * grid.cell_volume) - 1.0)
        worst = max(worst, err)
        if err > MASS_DRIFT_TOL:
            raise MassConservationError(f"mass drift {err:.3e} at step {k}")
        rho[k + 1] = cur
    if clip_total > clip_budget:
        logger.warning("FPK clipped %.3e of negative mass (budget %.1e)", clip_total, clip_budget)
    return FpkSolution(rho, clip_total, worst, n_sub)


def fpk_field_residual(rho: np.ndarray, v: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """``d rho/dt - div(rho v) - lap rho / 2`` on every slice."""
    d, dx = grid.d, grid.dx
    flux = rho[:, None] * v
    return time_derivative(rho, grid.dt) - divergence(flux, d, dx) - 0.5 * laplacian(rho, d, dx)


def fpk_residual(rho: np.ndarray, v: np.ndarray, mu: np.ndarray, grid: TorusGrid) -> dict[str, ResidualReport]:
    """Interior residual of the forward equation and the initial residual ``rho(0) - mu``."""
    mu = np.asarray(mu, dtype=float)
    mu = mu / (mu.sum() * grid.cell_volume)
    return {
        "fpk": ResidualReport.from_field("fpk", fpk_field_residual(rho, v, grid), time_axis=True),
        "fpk_initial": ResidualReport.from_field("fpk_initial", rho[0] - mu),
    }


def mass_errors(rho: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return np.abs(masses(rho, grid) - 1.0)
