"""Periodic space-time grids on the flat torus and the finite-difference
operators used throughout the package.

Spatial nodes sit at ``i / N`` on every axis and all index arithmetic is
modulo ``N``.  Arrays follow one layout everywhere:

* scalar slice: ``(N,) * d``
* vector slice: ``(d,) + (N,) * d``
* flows prepend a time axis of length ``M + 1``.

Operators act on the trailing ``d`` axes so they broadcast over any leading
(time, component, batch) axes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Raised when a point or field lies outside the domain an operation accepts."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform discretization of ``[0, T] x T^d``.

    Args:
        d: spatial dimension (1, 2 or 3).
        N: nodes per axis, even and at least 8.
        M: number of time steps (``M + 1`` slices).
        T: time horizon.
    """

    d: int
    N: int
    M: int
    T: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension d must be 1, 2 or 3, got {self.d}")
        if self.N < 8 or self.N % 2:
            raise ValueError(f"N must be even and >= 8, got {self.N}")
        if self.M < 2:
            raise ValueError(f"M must be >= 2, got {self.M}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")

    @property
    def dx(self) -> float:
        return 1.0 / self.N

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def n_nodes(self) -> int:
        return self.N**self.d

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)

    def axis_coords(self) -> np.ndarray:
        return np.arange(self.N) / self.N

    def mesh(self) -> list[np.ndarray]:
        """Node coordinates, one ``(N,)*d`` array per axis."""
        return np.meshgrid(*([self.axis_coords()] * self.d), indexing="ij")

    def points(self) -> np.ndarray:
        """Node coordinates as an ``(N**d, d)`` array in row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def scalar_shape(self) -> tuple[int, ...]:
        return (self.M + 1,) + self.spatial_shape

    def vector_shape(self) -> tuple[int, ...]:
        return (self.M + 1, self.d) + self.spatial_shape

    def refine(self, factor: int = 2, time_factor: int | None = None) -> "TorusGrid":
        """Grid with ``N * factor`` nodes and ``M * time_factor`` steps (default ``factor**2``)."""
        if time_factor is None:
            time_factor = factor**2
        return TorusGrid(self.d, self.N * factor, self.M * time_factor, self.T)


@dataclass(frozen=True)
class FieldFlow:
    """Time-indexed scalar or vector field on a grid.

    ``values`` has shape ``(M+1,) + (N,)*d`` for scalars and
    ``(M+1, d) + (N,)*d`` for vectors.
    """

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        g = self.grid
        if vals.shape not in (g.scalar_shape(), g.vector_shape()):
            raise ValueError(
                f"field shape {vals.shape} matches neither scalar {g.scalar_shape()} "
                f"nor vector {g.vector_shape()}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def n_components(self) -> int:
        return 1 if self.values.shape == self.grid.scalar_shape() else self.grid.d

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.grid.d + 2


def wrap(x) -> np.ndarray:
    """Project points of R^d onto the fundamental cell ``[0, 1)^d``."""
    y = np.mod(np.asarray(x, dtype=float), 1.0)
    # mod can round tiny negatives up to exactly 1.0
    return np.where(y >= 1.0, 0.0, y)


def torus_distance(x, y, d: int | None = None) -> np.ndarray:
    """Flat-torus distance between points of ``[0, 1)^d``.

    ``x`` and ``y`` broadcast against each other with the coordinate axis last
    (a bare scalar is a 1-D point).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    for name, pt in (("x", x), ("y", y)):
        if np.any(pt < 0.0) or np.any(pt >= 1.0):
            raise DomainError(f"{name} has coordinates outside [0, 1)")
    if d is not None and (x.shape[-1] != d or y.shape[-1] != d):
        raise DomainError(f"points must have {d} coordinates")
    diff = np.abs(x - y)
    diff = np.minimum(diff, 1.0 - diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def torus_cost_matrix(grid: TorusGrid) -> np.ndarray:
    """Pairwise torus distances between all grid nodes, ``(N**d, N**d)``."""
    pts = grid.points()
    diff = np.abs(pts[:, None, :] - pts[None, :, :])
    diff = np.minimum(diff, 1.0 - diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


# --- finite differences -------------------------------------------------------


def _shift(f: np.ndarray, s: int, axis: int) -> np.ndarray:
    return np.roll(f, -s, axis=axis)


def gradient(f: np.ndarray, d: int, dx: float) -> np.ndarray:
    """Central-difference gradient; inserts a component axis before the spatial axes."""
    comps = []
    for k in range(d):
        ax = f.ndim - d + k
        comps.append((_shift(f, 1, ax) - _shift(f, -1, ax)) / (2.0 * dx))
    return np.stack(comps, axis=f.ndim - d)


def partial(f: np.ndarray, axis: int, d: int, dx: float) -> np.ndarray:
    """Central difference along spatial axis ``axis`` (0-based among the last ``d``)."""
    ax = f.ndim - d + axis
    return (_shift(f, 1, ax) - _shift(f, -1, ax)) / (2.0 * dx)


def divergence(F: np.ndarray, d: int, dx: float) -> np.ndarray:
    """Central-difference divergence of a field with component axis at ``-d-1``."""
    if F.ndim < d + 1 or F.shape[-d - 1] != d:
        raise ValueError(f"divergence expects a component axis of length {d}, got shape {F.shape}")
    out = np.zeros(F.shape[: -d - 1] + F.shape[-d:])
    for k in range(d):
        out = out + partial(np.take(F, k, axis=F.ndim - d - 1), k, d, dx)
    return out


def laplacian(f: np.ndarray, d: int, dx: float, stencil: str = "compact") -> np.ndarray:
    """Second-order periodic Laplacian.

    ``stencil="compact"`` is the 3-point stencil per axis; ``"wide"`` is the
    5-point-span stencil that equals ``divergence(gradient(f))``.
    """
    out = np.zeros_like(f, dtype=float)
    for k in range(d):
        ax = f.ndim - d + k
        if stencil == "compact":
            out += (_shift(f, 1, ax) - 2.0 * f + _shift(f, -1, ax)) / dx**2
        elif stencil == "wide":
            out += (_shift(f, 2, ax) - 2.0 * f + _shift(f, -2, ax)) / (4.0 * dx**2)
        else:
            raise ValueError(f"unknown stencil {stencil!r}")
    return out


def stencil_op(f: np.ndarray, kind: str, grid: TorusGrid) -> np.ndarray:
    """Apply ``gradient``, ``divergence`` or ``laplacian`` to one field slice."""
    d, sp = grid.d, grid.spatial_shape
    if kind in ("gradient", "laplacian"):
        if f.shape != sp:
            raise ValueError(f"{kind} needs a scalar slice of shape {sp}, got {f.shape}")
        return gradient(f, d, grid.dx) if kind == "gradient" else laplacian(f, d, grid.dx)
    if kind == "divergence":
        if f.shape != (d,) + sp:
            raise ValueError(f"divergence needs a vector slice of shape {(d,) + sp}, got {f.shape}")
        return divergence(f, d, grid.dx)
    raise ValueError(f"unknown stencil kind {kind!r}")


def time_derivative(f: np.ndarray, dt: float) -> np.ndarray:
    """Second-order time derivative along axis 0 (central inside, one-sided at the ends)."""
    return np.gradient(f, dt, axis=0, edge_order=2)


# --- spectral diffusion -------------------------------------------------------


def _wavenumber_sq(N: int, d: int) -> np.ndarray:
    k = np.fft.fftfreq(N, d=1.0 / N)
    kr = np.fft.rfftfreq(N, d=1.0 / N)
    axes = [k] * (d - 1) + [kr]
    grids = np.meshgrid(*axes, indexing="ij")
    return sum(g * g for g in grids)


def heat_multiplier(N: int, d: int, tau: float) -> np.ndarray:
    """Fourier symbol of ``exp(tau * Laplacian / 2)`` on the rfft layout."""
    return np.exp(-2.0 * np.pi**2 * tau * _wavenumber_sq(N, d))


def heat_step(f: np.ndarray, d: int, tau: float, multiplier: np.ndarray | None = None) -> np.ndarray:
    """Exact heat semigroup ``exp(tau * Laplacian / 2)`` on the trigonometric interpolant of ``f``."""
    axes = tuple(range(f.ndim - d, f.ndim))
    N = f.shape[-1]
    if multiplier is None:
        multiplier = heat_multiplier(N, d, tau)
    fh = np.fft.rfftn(f, axes=axes)
    return np.fft.irfftn(fh * multiplier, s=(N,) * d, axes=axes)


# --- interpolation ------------------------------------------------------------


def periodic_interp(values: np.ndarray, points: np.ndarray, d: int) -> np.ndarray:
    """Multilinear interpolation of node values at arbitrary points with periodic wrap.

    Args:
        values: array whose last ``d`` axes are spatial; leading axes are kept.
        points: ``(n, d)`` coordinates in R^d (wrapped internally).

    Returns:
        Array of shape ``values.shape[:-d] + (n,)``.

    Uses nested ``a + f * (b - a)`` so constant fields interpolate exactly.
    """
    N = values.shape[-1]
    pts = np.asarray(points, dtype=float).reshape(-1, d)
    s = wrap(pts) * N
    i0 = np.floor(s).astype(np.int64)
    frac = s - i0
    i0 %= N
    i1 = (i0 + 1) % N
    lead = values.shape[:-d]
    # gather corners then collapse axes one at a time
    corners = {}
    for bits in itertools.product((0, 1), repeat=d):
        idx = tuple(np.where(b, i1[:, a], i0[:, a]) for a, b in enumerate(bits))
        corners[bits] = values[(Ellipsis,) + idx]
    for a in range(d - 1, -1, -1):
        f = frac[:, a]
        nxt = {}
        for bits in itertools.product((0, 1), repeat=a):
            lo = corners[bits + (0,)]
            hi = corners[bits + (1,)]
            nxt[bits] = lo + f * (hi - lo)
        corners = nxt
    out = corners[()]
    return out.reshape(lead + (pts.shape[0],))


def interp_time(flow: np.ndarray, grid: TorusGrid, t: float) -> np.ndarray:
    """Linear-in-time slice of a flow at time ``t``."""
    if t < -1e-12 or t > grid.T + 1e-12:
        raise DomainError(f"time {t} outside [0, {grid.T}]")
    s = min(max(t / grid.dt, 0.0), float(grid.M))
    k = min(int(np.floor(s)), grid.M - 1)
    f = s - k
    if f == 0.0:
        return flow[k]
    return flow[k] + f * (flow[k + 1] - flow[k])
