"""Backward HJB solve through the Hopf-Cole substitution ``w = exp(-u)``.

The quadratic HJB equation

    du/dt - |grad u|^2 / 2 + lap u / 2 - p = 0,   u(T) = h

becomes the linear terminal-value problem

    dw/dt + lap w / 2 + p w = 0,                   w(T) = exp(-h)

which is stepped backward with Strang splitting: exact Fourier diffusion
half-steps around a potential factor ``exp(tau * (p_lo + p_hi) / 2)``, the
trapezoidal rule for the time integral of ``p`` inside the Feynman-Kac
exponent.  The optimal feedback is ``v = grad u = -grad w / w``; the
form ``grad w / w`` that also appears in the literature has the opposite
sign, which only matters outside absolute values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import TorusGrid, gradient, heat_multiplier, heat_step, laplacian, time_derivative
from .reports import ResidualReport

logger = logging.getLogger(__name__)


class PositivityError(RuntimeError):
    """Raised when a backward step produces a nonpositive ``w``."""


@dataclass
class HjbSolution:
    w: np.ndarray
    u: np.ndarray
    v: np.ndarray
    substeps: int = 1
    residual_report: dict = field(default_factory=dict)


def solve_terminal_value(p: np.ndarray, h: np.ndarray, grid: TorusGrid,
                         max_potential_step: float = 0.5) -> np.ndarray:
    """Solve ``dw/dt + lap w / 2 + p w = 0`` backward from ``w(T) = exp(-h)``.

    Each grid step is split into ``n`` equal sub-steps with
    ``dt / n * max|p| <= max_potential_step``; ``p`` is linearly interpolated
    in time inside a step.

    Raises:
        PositivityError: if any slice acquires a nonpositive value.
    """
    p = np.asarray(p, dtype=float)
    h = np.asarray(h, dtype=float)
    if p.shape != grid.scalar_shape() or h.shape != grid.spatial_shape:
        raise ValueError("p must be a scalar flow and h a scalar slice on the grid")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(h))):
        raise ValueError("p and h must be finite")
    d, M, dt = grid.d, grid.M, grid.dt
    w = np.empty(grid.scalar_shape())
    w[M] = np.exp(-h)
    pmax = float(np.max(np.abs(p)))
    n_sub = max(1, math.ceil(dt * pmax / max_potential_step - 1e-12))
    tau = dt / n_sub
    half = heat_multiplier(grid.N, d, 0.5 * tau)
    cur = w[M]
    for k in range(M - 1, -1, -1):
        for j in range(n_sub):
            # sub-step covers [k + (n_sub-j-1)/n_sub, k + (n_sub-j)/n_sub] in step units
            a_hi = (n_sub - j) / n_sub
            a_lo = (n_sub - j - 1) / n_sub
            p_hi = p[k] + a_hi * (p[k + 1] - p[k])
            p_lo = p[k] + a_lo * (p[k + 1] - p[k])
            cur = heat_step(cur, d, 0.5 * tau, half)
            cur = cur * np.exp(0.5 * tau * (p_lo + p_hi))
            cur = heat_step(cur, d, 0.5 * tau, half)
        if not np.all(cur > 0.0):
            raise PositivityError(f"w lost positivity at step {k} (t = {k * dt:.6g}), min {cur.min():.3e}")
        w[k] = cur
    logger.debug("HJB solve: %d steps x %d sub-steps", M, n_sub)
    return w


def value_and_control(w: np.ndarray, grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    """Value ``u = -ln w`` and feedback ``v = grad u`` (central stencil)."""
    if not np.all(w > 0.0):
        raise PositivityError("value_and_control needs w > 0 everywhere")
    u = -np.log(w)
    return u, gradient(u, grid.d, grid.dx)


def solve_hjb(p: np.ndarray, h: np.ndarray, grid: TorusGrid, **kw) -> HjbSolution:
    w = solve_terminal_value(p, h, grid, **kw)
    u, v = value_and_control(w, grid)
    return HjbSolution(w=w, u=u, v=v)


def hjb_residual(u: np.ndarray, p: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """``du/dt - |grad u|^2/2 + lap u/2 - p`` on every slice."""
    d, dx = grid.d, grid.dx
    gu = gradient(u, d, dx)
    return time_derivative(u, grid.dt) - 0.5 * np.sum(gu * gu, axis=1) + 0.5 * laplacian(u, d, dx) - p


def hjb_terminal_residual(u: np.ndarray, h: np.ndarray) -> np.ndarray:
    return u[-1] - h


def convective(v: np.ndarray, d: int, dx: float) -> np.ndarray:
    """``(v . grad) v`` for a vector flow ``(M+1, d, N...)``."""
    out = np.zeros_like(v)
    for i in range(d):
        gvi = gradient(v[:, i], d, dx)
        out[:, i] = np.sum(v * gvi, axis=1)
    return out


def momentum_field_residual(v: np.ndarray, p: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """``dv/dt - (v . grad) v + lap v / 2 - grad p`` per component."""
    d, dx = grid.d, grid.dx
    lap_v = laplacian(v, d, dx)
    return time_derivative(v, grid.dt) - convective(v, d, dx) + 0.5 * lap_v - gradient(p, d, dx)


def momentum_residual(v: np.ndarray, p: np.ndarray, h: np.ndarray, grid: TorusGrid) -> dict[str, ResidualReport]:
    """Interior residual of the backward momentum equation and its terminal residual ``v(T) - grad h``."""
    interior = momentum_field_residual(v, p, grid)
    terminal = v[-1] - gradient(h, grid.d, grid.dx)
    return {
        "momentum": ResidualReport.from_field("momentum", interior, time_axis=True),
        "momentum_terminal": ResidualReport.from_field("momentum_terminal", terminal),
    }


def hjb_report(u: np.ndarray, p: np.ndarray, h: np.ndarray, grid: TorusGrid) -> dict[str, ResidualReport]:
    return {
        "hjb": ResidualReport.from_field("hjb", hjb_residual(u, p, grid), time_axis=True),
        "hjb_terminal": ResidualReport.from_field("hjb_terminal", hjb_terminal_residual(u, h)),
    }


def comparison_bounds(p: np.ndarray, h: np.ndarray, grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    """Feynman-Kac envelope ``exp(-(T-t)|p|_0 - |h|_0) <= w <= exp((T-t)|p|_0 + |h|_0)`` per slice."""
    pm, hm = float(np.max(np.abs(p))), float(np.max(np.abs(h)))
    rem = grid.T - grid.times
    return np.exp(-rem * pm - hm), np.exp(rem * pm + hm)
