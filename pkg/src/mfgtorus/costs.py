"""Density-dependent running and terminal costs ``rho -> p[rho]``, ``rho -> h[rho]``.

The concrete :class:`KernelCost` is the nonlocal form::

    p[rho](t, x) = int pbar(x, y) rho(t, y) dy + phat(x)
    h[rho](x)    = int hbar(x, y) rho(T, y) dy + hhat(x)

with the integrals taken by the rectangle rule on grid nodes.  The norm
helpers follow the mixed convention ``|f|_{m,n} = sum_{|a|<=m, |b|<=n}
sup |D_x^a D_y^b f|`` for two-point kernels, and ``|f|_n = sum_{|a|<=n} sup
|D^a f|`` for one-point functions, all derivatives taken with the central
stencil of :mod:`mfgtorus.grid`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .grid import TorusGrid
from .measures import d1T
from .trig import TrigPoly, TrigTerm, parse_poly


@runtime_checkable
class CostFunctional(Protocol):
    """Anything mapping a density flow to ``(p, h)`` arrays on the same grid."""

    def p(self, rho: np.ndarray, grid: TorusGrid) -> np.ndarray: ...

    def h(self, rho_T: np.ndarray, grid: TorusGrid) -> np.ndarray: ...


def _zero(d: int, two_point: bool) -> TrigPoly:
    return TrigPoly((), d, two_point)


@dataclass(frozen=True)
class KernelCost:
    """Kernel cost given by four trigonometric polynomials."""

    p_bar: TrigPoly
    p_hat: TrigPoly
    h_bar: TrigPoly
    h_hat: TrigPoly

    def __post_init__(self):
        d = self.p_bar.d
        for name, poly, two in (("p_bar", self.p_bar, True), ("p_hat", self.p_hat, False),
                                ("h_bar", self.h_bar, True), ("h_hat", self.h_hat, False)):
            if poly.d != d or poly.two_point != two:
                raise ValueError(f"{name} must be a {'two' if two else 'one'}-point polynomial on T^{d}")

    @classmethod
    def zero(cls, d: int) -> "KernelCost":
        return cls(_zero(d, True), _zero(d, False), _zero(d, True), _zero(d, False))

    @classmethod
    def from_parts(cls, d: int, p_bar=None, p_hat=None, h_bar=None, h_hat=None) -> "KernelCost":
        """Build a cost from polynomials or term strings; missing parts are zero."""

        def part(q, two):
            if q is None:
                return _zero(d, two)
            return parse_poly(q, d, two) if isinstance(q, str) else q

        return cls(part(p_bar, True), part(p_hat, False), part(h_bar, True), part(h_hat, False))

    @property
    def d(self) -> int:
        return self.p_bar.d

    @property
    def is_density_independent(self) -> bool:
        return self.p_bar.is_zero and self.h_bar.is_zero

    def scaled(self, c: float) -> "KernelCost":
        return KernelCost(*(q.scaled(c) for q in (self.p_bar, self.p_hat, self.h_bar, self.h_hat)))

    def p(self, rho: np.ndarray, grid: TorusGrid) -> np.ndarray:
        return _convolve(self.p_bar, rho, grid) + self.p_hat.on_grid(grid.N)

    def h(self, rho_T: np.ndarray, grid: TorusGrid) -> np.ndarray:
        return _convolve(self.h_bar, rho_T, grid) + self.h_hat.on_grid(grid.N)


def _convolve(kernel: TrigPoly, rho: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Rectangle-rule ``int kernel(x, y) rho(.., y) dy`` for trigonometric kernels.

    Each term ``cos(a(x) + b(y))`` splits as ``cos a cos b - sin a sin b`` so the
    quadrature reduces to two moments of ``rho`` per term.
    """
    d = grid.d
    lead = rho.shape[:-d]
    out = np.zeros(lead + grid.spatial_shape)
    if kernel.is_zero:
        return out
    mesh = grid.mesh()
    zeros = (0,) * d
    axes = tuple(range(rho.ndim - d, rho.ndim))
    for t in kernel.terms:
        ax = TrigTerm(1.0, t.k, (), t.phase).angle(mesh)
        by = TrigTerm(1.0, t.l, (), 0.0).angle(mesh) if t.l != zeros else np.zeros(grid.spatial_shape)
        c_mom = np.tensordot(rho, np.cos(by), axes=(axes, tuple(range(d)))) * grid.cell_volume
        s_mom = np.tensordot(rho, np.sin(by), axes=(axes, tuple(range(d)))) * grid.cell_volume
        c_mom = np.reshape(c_mom, lead + (1,) * d)
        s_mom = np.reshape(s_mom, lead + (1,) * d)
        out = out + t.amp * (np.cos(ax) * c_mom - np.sin(ax) * s_mom)
    return out


def eval_p(cost: CostFunctional, rho: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Running cost ``p[rho]`` on every slice."""
    return cost.p(rho, grid)


def eval_h(cost: CostFunctional, rho_T: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Terminal cost ``h[rho]`` from the terminal slice."""
    return cost.h(rho_T, grid)


# --- derivative norms ---------------------------------------------------------


def _multi_indices(n: int, d: int):
    for order in range(n + 1):
        for combo in itertools.combinations_with_replacement(range(d), order):
            yield combo


def derivative_sups(f: np.ndarray, n: int, d: int, dx: float,
                    time_axis: bool = False) -> dict[tuple[int, ...], float]:
    """Sup norms of all stencil derivatives of order ``<= n``.

    The first ``d`` axes (after a leading time axis when ``time_axis``) are
    differentiated; any remaining axes are only maximized over.  Keys are
    sorted tuples of differentiated axes.
    """
    offset = 1 if time_axis else 0
    level: dict[tuple[int, ...], np.ndarray] = {(): f}
    out = {(): float(np.max(np.abs(f)))}
    for _ in range(n):
        nxt = {}
        for combo, g in level.items():
            start = combo[-1] if combo else 0
            for ax in range(start, d):
                nxt[combo + (ax,)] = _pdiff(g, ax, offset, dx)
        level = nxt
        out.update({c: float(np.max(np.abs(g))) for c, g in level.items()})
    return out


def _pdiff(f: np.ndarray, spatial_axis: int, offset: int, dx: float) -> np.ndarray:
    ax = offset + spatial_axis
    return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * dx)


def point_norm(f: np.ndarray, n: int, grid: TorusGrid, time_axis: bool = False) -> float:
    """``sum_{|a| <= n} sup |D^a f|`` for a one-point function (or flow)."""
    return sum(derivative_sups(f, n, grid.d, grid.dx, time_axis=time_axis).values())


def kernel_norm(kernel_vals: np.ndarray, m: int, n: int, grid: TorusGrid) -> float:
    """``sum_{|a|<=m, |b|<=n} sup |D_x^a D_y^b K|`` for node values of shape ``(N,)*2d``."""
    d = grid.d
    total = 0.0
    for b in _multi_indices(n, d):
        g = kernel_vals
        for ax in b:
            g = _pdiff(g, d + ax, 0, grid.dx)
        total += sum(derivative_sups(g, m, d, grid.dx).values())
    return total


def kappa_bound(cost: KernelCost, grid: TorusGrid) -> float:
    """Stencil estimate of ``|pbar|_{2,0} + |phat|_2 + |hbar|_{4,0} + |hhat|_4``."""
    N = grid.N
    return (kernel_norm(cost.p_bar.on_grid(N), 2, 0, grid) + point_norm(cost.p_hat.on_grid(N), 2, grid)
            + kernel_norm(cost.h_bar.on_grid(N), 4, 0, grid) + point_norm(cost.h_hat.on_grid(N), 4, grid))


def modulus_slope(cost: KernelCost, grid: TorusGrid) -> float:
    """Stencil estimate of ``|pbar|_{1,1} + |hbar|_{4,1}``, the slope of the linear modulus."""
    N = grid.N
    return kernel_norm(cost.p_bar.on_grid(N), 1, 1, grid) + kernel_norm(cost.h_bar.on_grid(N), 4, 1, grid)


def stencil_deficit(cost: KernelCost, grid: TorusGrid, order: int = 5) -> float:
    """Relative amount by which stencil sup-norms may undershoot the true ones.

    Central differences shrink a mode of frequency ``K`` by ``sinc(2 pi K dx)``
    per derivative, and sampling at nodes can miss a peak by ``cos(pi K dx)``.
    """
    K = max(cost.p_bar.max_frequency(), cost.h_bar.max_frequency())
    theta = 2.0 * np.pi * K * grid.dx
    if theta == 0.0:
        return 0.0
    shrink = (np.sin(theta) / theta) ** order * np.cos(np.pi * K * grid.dx)
    if shrink <= 0.0:
        return np.inf
    return 1.0 / shrink - 1.0


@dataclass
class ModulusReport:
    lhs: float
    rhs: float
    slack: float
    d1T: float
    holds: bool

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else (0.0 if self.lhs == 0 else np.inf)


def continuity_lhs(cost: CostFunctional, rho1: np.ndarray, rho2: np.ndarray, grid: TorusGrid) -> float:
    """``|p[rho1] - p[rho2]|_{0,1} + |h[rho1] - h[rho2]|_4`` with stencil norms."""
    dp = cost.p(rho1, grid) - cost.p(rho2, grid)
    dh = cost.h(rho1[-1], grid) - cost.h(rho2[-1], grid)
    return point_norm(dp, 1, grid, time_axis=True) + point_norm(dh, 4, grid)


def verify_modulus(cost: KernelCost, rho1, rho2, grid: TorusGrid | None = None) -> ModulusReport:
    """Check the linear modulus of continuity of ``rho -> (p, h)`` for one pair of flows.

    ``rhs = (|pbar|_{1,1} + |hbar|_{4,1}) * d1T(rho1, rho2)``; the pair passes
    when ``lhs <= rhs * (1 + 1e-6) + slack`` with ``slack`` the stencil
    undershoot of the kernel norms (see :func:`stencil_deficit`).
    """
    from .measures import _unpack

    rho1, rho2, grid = _unpack(rho1, rho2, grid)
    dist = d1T(rho1, rho2, grid)
    rhs = modulus_slope(cost, grid) * dist
    lhs = continuity_lhs(cost, rho1, rho2, grid)
    slack = rhs * stencil_deficit(cost, grid) + 1e-13
    return ModulusReport(lhs, rhs, slack, dist, bool(lhs <= rhs * (1 + 1e-6) + slack))


def holder_time_seminorm(f: np.ndarray, grid: TorusGrid, delta: float = 0.5) -> float:
    """``[f]_{delta, 0}``: sup of ``|f(t,x) - f(t',x')| / (|t-t'|**delta + 1)`` over node pairs."""
    axes = tuple(range(1, f.ndim))
    hi = f.max(axis=axes)
    lo = f.min(axis=axes)
    t = grid.times
    osc = np.maximum(hi[:, None] - lo[None, :], hi[None, :] - lo[:, None])
    lag = np.abs(t[:, None] - t[None, :]) ** delta
    return float(np.max(osc / (lag + 1.0)))


def p_half_two_norm(p: np.ndarray, grid: TorusGrid) -> float:
    """``|p|_{1/2,2} = |p|_{0,2} + [p]_{1/2,0} + sum_{|a|=2} [D^a p]_{1/2,0}``."""
    d, dx = grid.d, grid.dx
    total = point_norm(p, 2, grid, time_axis=True) + holder_time_seminorm(p, grid)
    for combo in _multi_indices(2, d):
        if len(combo) == 2:
            g = p
            for ax in combo:
                g = _pdiff(g, ax, 1, dx)
            total += holder_time_seminorm(g, grid)
    return total
