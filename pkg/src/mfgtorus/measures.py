"""Probability densities on the torus and the transport metrics between them."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .grid import TorusGrid, torus_cost_matrix

logger = logging.getLogger(__name__)

MASS_TOL = 1e-10
EXACT_LIMIT = 4096


class TransportError(RuntimeError):
    """Raised when the regularized transport solve fails to converge."""

    def __init__(self, message: str, gap: float):
        super().__init__(f"{message} (marginal gap {gap:.3e})")
        self.gap = gap


@dataclass(frozen=True)
class DensityFlow:
    """Time-indexed probability density, nonnegative with unit mass per slice."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        g = self.grid
        if vals.shape != g.scalar_shape():
            raise ValueError(f"density flow must have shape {g.scalar_shape()}, got {vals.shape}")
        if np.any(vals < -1e-14):
            raise ValueError(f"density has negative values (min {vals.min():.3e})")
        mass = masses(vals, g)
        if np.max(np.abs(mass - 1.0)) > MASS_TOL:
            raise ValueError(f"density slices must have unit mass (worst {mass[np.argmax(np.abs(mass - 1))]!r})")
        object.__setattr__(self, "values", vals)

    def slice(self, k: int) -> np.ndarray:
        return self.values[k]


def masses(rho: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Rectangle-rule mass of each slice over the trailing spatial axes."""
    axes = tuple(range(rho.ndim - grid.d, rho.ndim))
    return rho.sum(axis=axes) * grid.cell_volume


def normalize(rho: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Rescale every slice to unit mass."""
    m = masses(rho, grid)
    return rho / np.reshape(m, m.shape + (1,) * grid.d)


@dataclass
class W1Result:
    value: float
    method: str  # "circle", "exact" or "entropic"
    gap: float = 0.0


# --- 1-Wasserstein ------------------------------------------------------------


def _w1_circle(mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
    # mu, nu: (..., N) node densities; exact for atoms at the nodes
    N = mu.shape[-1]
    F = np.cumsum(mu - nu, axis=-1) / N
    c = np.median(F, axis=-1, keepdims=True)
    return np.sum(np.abs(F - c), axis=-1) / N


def _check_masses(a: np.ndarray, b: np.ndarray) -> None:
    ma, mb = a.sum(), b.sum()
    if abs(ma - mb) > 1e-8:
        raise ValueError(f"mass mismatch {abs(ma - mb):.3e} exceeds 1e-8")


_COST_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _cost(d: int, N: int) -> np.ndarray:
    key = (d, N)
    if key not in _COST_CACHE:
        _COST_CACHE[key] = torus_cost_matrix(TorusGrid(d, N, 2, 1.0))
    return _COST_CACHE[key]


def _import_ot():
    for backend in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{backend}", "1")
    import ot

    return ot


def wasserstein1_details(
    mu: np.ndarray,
    nu: np.ndarray,
    *,
    exact_limit: int = EXACT_LIMIT,
    reg: float = 2e-3,
    max_iter: int = 20000,
    marginal_tol: float = 1e-9,
) -> W1Result:
    """1-Wasserstein distance between two density slices, with the method used.

    Densities are node values (unit mass under the rectangle rule); each node
    carries the atom ``rho_i * dx**d``.  In 1-D the circle formula
    ``min_c sum |F - c| dx`` is exact.  For ``d >= 2`` an exact network-simplex
    transport is solved when ``N**d <= exact_limit``; larger grids use a
    log-domain Sinkhorn solve whose transport cost is reported together with
    the bound ``2 * reg * log(n)`` on its excess over the true distance.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError(f"shape mismatch {mu.shape} vs {nu.shape}")
    d, N = mu.ndim, mu.shape[0]
    vol = float(N) ** -d
    a = mu.ravel() * vol
    b = nu.ravel() * vol
    _check_masses(a, b)
    if d == 1:
        return W1Result(float(_w1_circle(mu, nu)), "circle")
    if np.array_equal(a, b):
        return W1Result(0.0, "exact")
    ot = _import_ot()
    a = np.clip(a, 0.0, None)
    b = np.clip(b, 0.0, None)
    a /= a.sum()
    b /= b.sum()
    C = _cost(d, N)
    if N**d <= exact_limit:
        val = ot.emd2(a, b, C, numItermax=10_000_000)
        return W1Result(float(val), "exact")
    P, log = ot.sinkhorn(a, b, C, reg, method="sinkhorn_log", numItermax=max_iter,
                         stopThr=marginal_tol, log=True)
    err = float(np.abs(P.sum(axis=1) - a).sum() + np.abs(P.sum(axis=0) - b).sum())
    if err > 10 * marginal_tol:
        raise TransportError("entropic transport did not converge", err)
    gap = 2.0 * reg * np.log(a.size)
    return W1Result(float(np.sum(P * C)), "entropic", gap)


def wasserstein1_torus(mu: np.ndarray, nu: np.ndarray, **kw) -> float:
    """1-Wasserstein distance on the torus between two density slices."""
    return wasserstein1_details(mu, nu, **kw).value


def slice_distances(rho1: np.ndarray, rho2: np.ndarray, grid: TorusGrid, **kw) -> np.ndarray:
    """Per-slice 1-Wasserstein distances between two flows."""
    if rho1.shape != rho2.shape or rho1.shape != grid.scalar_shape():
        raise ValueError("flows must live on the same grid")
    if grid.d == 1:
        _check_masses(rho1.sum(axis=-1) * grid.dx, rho2.sum(axis=-1) * grid.dx)
        return _w1_circle(rho1, rho2)
    return np.array([wasserstein1_torus(r1, r2, **kw) for r1, r2 in zip(rho1, rho2)])


def d1T(rho1, rho2, grid: TorusGrid | None = None, **kw) -> float:
    """Sup over time slices of the 1-Wasserstein distance.

    Accepts two :class:`DensityFlow` objects, or two arrays plus their grid.
    """
    rho1, rho2, grid = _unpack(rho1, rho2, grid)
    return float(np.max(slice_distances(rho1, rho2, grid, **kw)))


def _unpack(rho1, rho2, grid):
    if isinstance(rho1, DensityFlow):
        if isinstance(rho2, DensityFlow) and rho1.grid != rho2.grid:
            raise ValueError("flows live on different grids")
        grid = rho1.grid
        rho1 = rho1.values
    if isinstance(rho2, DensityFlow):
        grid = grid or rho2.grid
        rho2 = rho2.values
    if grid is None:
        raise ValueError("grid required for array inputs")
    return rho1, rho2, grid


def l1_proxy(rho1: np.ndarray, rho2: np.ndarray, grid: TorusGrid) -> float:
    """Max over slices of the L1 distance; ``d1 <= sqrt(d)/4 * L1`` on the torus."""
    axes = tuple(range(1, grid.d + 1))
    return float(np.max(np.abs(rho1 - rho2).sum(axis=axes)) * grid.cell_volume)


def holder_half_seminorm(rho, grid: TorusGrid | None = None, **kw) -> float:
    """``max_{k<k'} d1(rho_k, rho_k') / |t_k - t_k'|**0.5``."""
    if isinstance(rho, DensityFlow):
        grid, rho = rho.grid, rho.values
    M, dt = grid.M, grid.dt
    best = 0.0
    for k in range(M):
        if grid.d == 1:
            dists = _w1_circle(np.broadcast_to(rho[k], rho[k + 1:].shape), rho[k + 1:])
        else:
            dists = np.array([wasserstein1_torus(rho[k], r, **kw) for r in rho[k + 1:]])
        lags = np.arange(1, M - k + 1) * dt
        best = max(best, float(np.max(dists / np.sqrt(lags))))
    return best


def holder_pair_check(rho: np.ndarray, grid: TorusGrid, vmax: float, **kw) -> tuple[bool, float]:
    """Check ``d1(rho(t), rho(s)) <= (1 + sqrt(T) vmax) |t-s|**0.5 + 2 dx`` on every slice pair.

    Returns ``(holds, worst)`` where ``worst`` is the largest ``lhs - rhs``.
    """
    M, dt = grid.M, grid.dt
    const = 1.0 + np.sqrt(grid.T) * vmax
    worst = -np.inf
    for k in range(M):
        if grid.d == 1:
            dists = _w1_circle(np.broadcast_to(rho[k], rho[k + 1:].shape), rho[k + 1:])
        else:
            dists = np.array([wasserstein1_torus(rho[k], r, **kw) for r in rho[k + 1:]])
        lags = np.arange(1, M - k + 1) * dt
        worst = max(worst, float(np.max(dists - const * np.sqrt(lags) - 2.0 * grid.dx)))
    return worst <= 0.0, worst
