"""Time-reversed form of the equilibrium system.

With ``s = T - t`` the pair ``(rho, v)(T - s, x)`` solves

    (d/ds + v.grad) v + grad p[rho] - lap v / 2 = 0,   v(0) = grad h[rho]
    d rho/ds + div(rho v) + lap rho / 2 = 0,            rho(T) = mu

where ``h[rho]`` reads the density at ``s = 0`` (the original terminal
time).  Note the sign of the diffusion in the continuity equation: forward
in ``s`` it is a backward heat equation, consistent with prescribing the
density at the final time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import CostFunctional
from .fixed_point import Equilibrium
from .grid import TorusGrid, divergence, gradient, interp_time, laplacian, periodic_interp, time_derivative, wrap
from .hjb import convective
from .reports import ResidualReport


def time_reverse(f: np.ndarray) -> np.ndarray:
    """Map slice ``k`` to slice ``M - k``; an exact involution."""
    return np.ascontiguousarray(np.asarray(f)[::-1])


@dataclass
class NseSolution:
    grid: TorusGrid
    rho: np.ndarray
    v: np.ndarray
    p: np.ndarray
    residuals: dict[str, ResidualReport] = field(default_factory=dict)

    @property
    def passed_names(self) -> list[str]:
        return list(self.residuals)


def momentum_residual_field(v: np.ndarray, p: np.ndarray, grid: TorusGrid) -> np.ndarray:
    d, dx = grid.d, grid.dx
    return time_derivative(v, grid.dt) + convective(v, d, dx) + gradient(p, d, dx) - 0.5 * laplacian(v, d, dx)


def continuity_residual_field(rho: np.ndarray, v: np.ndarray, grid: TorusGrid) -> np.ndarray:
    d, dx = grid.d, grid.dx
    return time_derivative(rho, grid.dt) + divergence(rho[:, None] * v, d, dx) + 0.5 * laplacian(rho, d, dx)


def nse_residuals(rho: np.ndarray, v: np.ndarray, mu: np.ndarray, cost: CostFunctional,
                  grid: TorusGrid) -> dict[str, ResidualReport]:
    """The four residuals of the reversed system for time-reversed ``rho``, ``v``."""
    p = cost.p(rho, grid)
    h0 = cost.h(rho[0], grid)
    mu = np.asarray(mu, dtype=float)
    mu = mu / (mu.sum() * grid.cell_volume)
    return {
        "nse_momentum": ResidualReport.from_field("nse_momentum", momentum_residual_field(v, p, grid), True),
        "nse_continuity": ResidualReport.from_field("nse_continuity", continuity_residual_field(rho, v, grid), True),
        "nse_initial_velocity": ResidualReport.from_field("nse_initial_velocity",
                                                          v[0] - gradient(h0, grid.d, grid.dx)),
        "nse_terminal_density": ResidualReport.from_field("nse_terminal_density", rho[-1] - mu),
    }


def assemble_nse_solution(eq: Equilibrium, cost: CostFunctional) -> NseSolution:
    """Reverse the equilibrium in time and certify it against the reversed system."""
    g = eq.grid
    rho = time_reverse(eq.rho)
    v = time_reverse(eq.v)
    res = nse_residuals(rho, v, eq.mu, cost, g)
    return NseSolution(g, rho, v, cost.p(rho, g), res)


def periodic_extension_eval(values: np.ndarray, grid: TorusGrid, t: float, x) -> np.ndarray:
    """Evaluate a flow at time ``t`` and arbitrary points ``x`` of ``R^d`` through the torus.

    Returns shape ``(n,)`` for scalar flows and ``(d, n)`` for vector flows.

    Raises:
        ValueError: if ``t`` lies outside ``[0, T]``.
    """
    if not 0.0 <= t <= grid.T:
        raise ValueError(f"t = {t} outside [0, {grid.T}]")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != grid.d:
        x = x.reshape(-1, grid.d)
    return periodic_interp(interp_time(values, grid, t), wrap(x), grid.d)
