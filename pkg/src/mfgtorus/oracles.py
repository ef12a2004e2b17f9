"""Monte-Carlo checks that do not share code paths with the grid solvers.

Paths are simulated unwrapped in R^d and projected onto the torus only to
evaluate fields and bin histograms.  Randomness is drawn per block of paths
from a counter-based Philox stream keyed by ``(seed, block index)``, so
results do not depend on how blocks are spread over worker threads.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .grid import TorusGrid, gradient, interp_time, laplacian, periodic_interp, time_derivative, wrap
from .hjb import convective

if TYPE_CHECKING:
    from .costs import CostFunctional
    from .fixed_point import Equilibrium


@dataclass(frozen=True)
class McOptions:
    n_samples: int = 10_000
    n_steps: int = 100
    seed: int = 0
    antithetic: bool = False
    threads: int = 1
    block_size: int = 8192

    def __post_init__(self):
        if self.n_samples < 100:
            raise ValueError("n_samples must be >= 100")
        if self.n_steps < 10:
            raise ValueError("n_steps must be >= 10")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.antithetic and self.block_size % 2:
            raise ValueError("antithetic sampling needs an even block size")


@dataclass
class McEstimate:
    oracle: str
    estimate: float
    std_error: float
    n: int
    seed: int
    inputs_hash: str

    def to_dict(self) -> dict:
        return asdict(self)


def inputs_hash(*arrays, **params) -> str:
    hsh = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(np.asarray(a, dtype=float))
        hsh.update(str(a.shape).encode())
        hsh.update(a.tobytes())
    hsh.update(repr(sorted(params.items())).encode())
    return hsh.hexdigest()[:16]


def _blocks(opts: McOptions) -> list[tuple[int, int]]:
    n, b = opts.n_samples, opts.block_size
    return [(i, min(b, n - i * b)) for i in range(math.ceil(n / b))]


def _rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _normals(rng: np.random.Generator, shape: tuple[int, ...], antithetic: bool) -> np.ndarray:
    """Standard normals with the path axis at position 1 (antithetic pairs split it in half)."""
    if not antithetic:
        return rng.standard_normal(shape)
    half = (shape[0], (shape[1] + 1) // 2) + shape[2:]
    z = rng.standard_normal(half)
    return np.concatenate([z, -z], axis=1)[:, : shape[1]]


def _map_blocks(fn, opts: McOptions) -> list:
    blocks = _blocks(opts)
    if opts.threads <= 1:
        return [fn(*b) for b in blocks]
    with ThreadPoolExecutor(max_workers=opts.threads) as pool:
        return list(pool.map(lambda b: fn(*b), blocks))


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.shape[0]
    if n and np.all(x == x[0]):
        # deterministic integrand: report it exactly, free of summation rounding
        return float(x[0]), 0.0
    mean = float(np.mean(x))
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(x, ddof=1) / np.sqrt(n))


def sample_density(mu: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points from the piecewise-constant density whose cells are centered at the nodes."""
    d, N = mu.ndim, mu.shape[0]
    w = np.clip(mu.ravel(), 0.0, None)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), cdf.size - 1)
    cells = np.stack(np.unravel_index(idx, mu.shape), axis=-1).astype(float)
    return (cells + rng.random((n, d)) - 0.5) / N


def _field_at(flow: np.ndarray, grid: TorusGrid, t: float, x: np.ndarray) -> np.ndarray:
    return periodic_interp(interp_time(flow, grid, t), x, grid.d)


# --- Feynman-Kac --------------------------------------------------------------


def feynman_kac_value(p: np.ndarray, h: np.ndarray, grid: TorusGrid, t: float, x, opts: McOptions) -> McEstimate:
    """Estimate ``w(t, x) = E exp(int_t^T p(s, x + W_{s-t}) ds - h(x + W_{T-t}))``.

    The time integral is the trapezoidal rule on ``opts.n_steps`` equal steps
    of the sampled Brownian path.
    """
    d = grid.d
    x = np.asarray(x, dtype=float).reshape(1, d)
    if not 0.0 <= t <= grid.T:
        raise ValueError(f"t must lie in [0, {grid.T}]")
    n_steps = opts.n_steps
    delta = (grid.T - t) / n_steps
    times = t + delta * np.arange(n_steps + 1)
    slices = [interp_time(p, grid, s) for s in times]

    def block(b, nb):
        rng = _rng(opts.seed, b)
        z = _normals(rng, (n_steps, nb, d), opts.antithetic)
        X = np.repeat(x, nb, axis=0)
        prev = periodic_interp(slices[0], X, d)
        integral = np.zeros(nb)
        for j in range(n_steps):
            X = X + np.sqrt(delta) * z[j]
            cur = periodic_interp(slices[j + 1], X, d)
            integral += 0.5 * delta * (prev + cur)
            prev = cur
        return np.exp(integral - periodic_interp(h, X, d))

    vals = np.concatenate(_map_blocks(block, opts))
    mean, se = _mean_se(vals)
    return McEstimate("feynman_kac", mean, se, vals.size, opts.seed,
                      inputs_hash(p, h, t=t, x=tuple(x.ravel()), n_steps=n_steps))


# --- particles ----------------------------------------------------------------


@dataclass
class ParticleResult:
    density: np.ndarray                # histogram flow (M+1, N...)
    paths: np.ndarray | None = None    # unwrapped positions at grid times (M+1, n, d)
    positions: np.ndarray | None = None  # final positions wrapped to [0, 1)^d
    n: int = 0
    seed: int = 0


def _substeps(grid: TorusGrid, opts: McOptions) -> int:
    return max(1, math.ceil(opts.n_steps / grid.M))


def _histogram(X: np.ndarray, grid: TorusGrid) -> np.ndarray:
    N, d = grid.N, grid.d
    idx = np.floor(wrap(X) * N + 0.5).astype(np.int64) % N
    flat = np.ravel_multi_index(tuple(idx[:, a] for a in range(d)), grid.spatial_shape)
    return np.bincount(flat, minlength=grid.n_nodes).reshape(grid.spatial_shape)


def _initial_points(rng, nb, mu, start, d):
    if start is not None:
        return np.repeat(np.asarray(start, dtype=float).reshape(1, d), nb, axis=0)
    return sample_density(mu, nb, rng)


def simulate_particles(v: np.ndarray, mu: np.ndarray | None, grid: TorusGrid, opts: McOptions, *,
                       start=None, keep_paths: bool = False) -> ParticleResult:
    """Euler-Maruyama particles ``X <- X - v(t, X) dt + sqrt(dt) xi`` binned on the grid.

    Initial points come from ``mu`` (exact sampling of the cell histogram) or
    sit at ``start``.  ``opts.n_steps`` is rounded up to a multiple of ``M``.
    """
    d, M, dt = grid.d, grid.M, grid.dt
    sub = _substeps(grid, opts)
    h = dt / sub

    def block(b, nb):
        rng = _rng(opts.seed, b)
        X = _initial_points(rng, nb, mu, start, d)
        counts = np.empty((M + 1,) + grid.spatial_shape, dtype=np.int64)
        counts[0] = _histogram(X, grid)
        kept = [X.copy()] if keep_paths else None
        for k in range(M):
            z = _normals(rng, (sub, nb, d), opts.antithetic)
            for j in range(sub):
                s = k * dt + j * h
                drift = _field_at(v, grid, s, X).T
                X = X - drift * h + np.sqrt(h) * z[j]
            counts[k + 1] = _histogram(X, grid)
            if keep_paths:
                kept.append(X.copy())
        return counts, (np.stack(kept) if keep_paths else None), wrap(X)

    results = _map_blocks(block, opts)
    counts = sum(r[0] for r in results)
    density = counts / (opts.n_samples * grid.cell_volume)
    paths = np.concatenate([r[1] for r in results], axis=1) if keep_paths else None
    final = np.concatenate([r[2] for r in results])
    return ParticleResult(density, paths, final, opts.n_samples, opts.seed)


# --- coupled paths ------------------------------------------------------------


@dataclass
class CouplingReport:
    sup_diff_mean: float
    std_error: float
    mean_sq_by_slice: list[float] = field(default_factory=list)
    n: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def coupled_paths_distance(v1: np.ndarray, v2: np.ndarray, grid: TorusGrid, opts: McOptions,
                           mu: np.ndarray | None = None) -> CouplingReport:
    """``E sup_s |X1(s) - X2(s)|^2`` for synchronously coupled diffusions.

    Both processes start from the same points (drawn from ``mu``, uniform by
    default) and see the same Brownian increments.
    """
    if v1.shape != v2.shape:
        raise ValueError("controls must live on the same grid")
    d, M, dt = grid.d, grid.M, grid.dt
    if mu is None:
        mu = np.ones(grid.spatial_shape)
    sub = _substeps(grid, opts)
    h = dt / sub

    def block(b, nb):
        rng = _rng(opts.seed, b)
        X1 = sample_density(mu, nb, rng)
        X2 = X1.copy()
        sup = np.zeros(nb)
        by_slice = np.zeros((M + 1, nb))
        for k in range(M):
            z = _normals(rng, (sub, nb, d), opts.antithetic)
            for j in range(sub):
                s = k * dt + j * h
                noise = np.sqrt(h) * z[j]
                X1 = X1 - _field_at(v1, grid, s, X1).T * h + noise
                X2 = X2 - _field_at(v2, grid, s, X2).T * h + noise
                sup = np.maximum(sup, np.sum((X1 - X2) ** 2, axis=1))
            by_slice[k + 1] = np.sum((X1 - X2) ** 2, axis=1)
        return sup, by_slice

    res = _map_blocks(block, opts)
    sup = np.concatenate([r[0] for r in res])
    by_slice = np.concatenate([r[1] for r in res], axis=1)
    mean, se = _mean_se(sup)
    return CouplingReport(mean, se, [float(x) for x in by_slice.mean(axis=1)], sup.size, opts.seed)


# --- controlled cost ----------------------------------------------------------


def controlled_costs(controls: list[np.ndarray], p: np.ndarray, h: np.ndarray, grid: TorusGrid,
                     opts: McOptions, mu: np.ndarray | None = None, start=None) -> np.ndarray:
    """Per-path realized cost ``int (|v|^2/2 - p)(s, X_s) ds + h(X_T)`` for each control.

    All controls see the same initial points and Brownian increments, so
    differences between rows have common-random-number variance.  Returns an
    array of shape ``(len(controls), n_samples)``.
    """
    d, M, dt = grid.d, grid.M, grid.dt
    sub = _substeps(grid, opts)
    hstep = dt / sub

    def running(v, s, X):
        vv = _field_at(v, grid, s, X)
        return 0.5 * np.sum(vv * vv, axis=0) - _field_at(p, grid, s, X), vv

    def block(b, nb):
        out = np.empty((len(controls), nb))
        for c, v in enumerate(controls):
            rng = _rng(opts.seed, b)
            X = _initial_points(rng, nb, mu, start, d)
            cost = np.zeros(nb)
            prev, vv = running(v, 0.0, X)
            for k in range(M):
                z = _normals(rng, (sub, nb, d), opts.antithetic)
                for j in range(sub):
                    s = k * dt + j * hstep
                    X = X - vv.T * hstep + np.sqrt(hstep) * z[j]
                    cur, vv = running(v, s + hstep, X)
                    cost += 0.5 * hstep * (prev + cur)
                    prev = cur
            out[c] = cost + periodic_interp(h, X, d)
        return out

    return np.concatenate(_map_blocks(block, opts), axis=1)


def random_smooth_controls(grid: TorusGrid, n: int, amplitude: float = 0.2, seed: int = 0,
                           max_freq: int = 2) -> list[np.ndarray]:
    """Random low-frequency vector fields, each with sup norm at most ``amplitude``."""
    rng = np.random.default_rng(seed)
    mesh = grid.mesh()
    tt = grid.times[:, None]
    out = []
    for _ in range(n):
        field_ = np.zeros(grid.vector_shape())
        for i in range(grid.d):
            k = rng.integers(-max_freq, max_freq + 1, size=grid.d)
            if not np.any(k):
                k[rng.integers(grid.d)] = 1
            phase, slope = rng.uniform(), rng.uniform(-0.5, 0.5)
            ang = 2 * np.pi * (sum(ki * xi for ki, xi in zip(k, mesh)) + phase)
            prof = (1.0 + slope * tt / grid.T).reshape((-1,) + (1,) * grid.d)
            field_[:, i] = prof * np.cos(ang)[None]
        field_ *= amplitude / np.max(np.abs(field_))
        out.append(field_)
    return out


# --- Hamiltonian system ---------------------------------------------------------


@dataclass
class DecouplingReport:
    terminal_gap: float
    terminal_gap_se: float
    martingale_residuals: list[float]
    martingale_se: list[float]
    bounds: list[float]
    drift_constant: float
    passed: bool
    n: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def verify_hamiltonian_decoupling(eq: "Equilibrium", cost: "CostFunctional", opts: McOptions) -> DecouplingReport:
    """Check ``Y_t = -v(t, X_t)`` against the backward equation ``dY = -grad p dt + Z dW``.

    Simulates ``dX = Y dt + dW`` from the initial law, then reports the
    terminal mismatch ``E|Y_T + grad h(X_T)|`` and, per grid interval, the
    drift residual ``|E[Y_{t+D} - Y_t] + D E[grad p(t, X_t)]|``.  Each
    residual must stay within ``3 SE + C D^2`` where ``C`` is half the sup of
    ``(d/dt - v.grad + lap/2) grad p`` (the local error of the left-point
    rule) and the terminal gap within ``3 SE + C D^2`` as well.
    """
    g = eq.grid
    d, M, dt = g.d, g.M, g.dt
    p = cost.p(eq.rho, g)
    hT = cost.h(eq.rho[-1], g)
    grad_p = gradient(p, d, g.dx)
    grad_h = gradient(hT, d, g.dx)
    gen = time_derivative(grad_p, dt) - convective_apply(eq.v, grad_p, d, g.dx) + 0.5 * laplacian(grad_p, d, g.dx)
    C = 0.5 * float(np.max(np.abs(gen)))
    sub = _substeps(g, opts)
    hstep = dt / sub

    def block(b, nb):
        rng = _rng(opts.seed, b)
        X = sample_density(eq.mu, nb, rng)
        incr = np.empty((M, nb, d))
        Y = -_field_at(eq.v, g, 0.0, X).T
        for k in range(M):
            gp = _field_at(grad_p, g, k * dt, X).T
            z = _normals(rng, (sub, nb, d), opts.antithetic)
            for j in range(sub):
                s = k * dt + j * hstep
                X = X - _field_at(eq.v, g, s, X).T * hstep + np.sqrt(hstep) * z[j]
            Y_next = -_field_at(eq.v, g, (k + 1) * dt, X).T
            incr[k] = Y_next - Y + dt * gp
            Y = Y_next
        gap = np.sqrt(np.sum((Y + periodic_interp(grad_h, X, d).T) ** 2, axis=1))
        return incr, gap

    res = _map_blocks(block, opts)
    incr = np.concatenate([r[0] for r in res], axis=1)
    gap = np.concatenate([r[1] for r in res])
    n = gap.size
    means = incr.mean(axis=1)                          # (M, d)
    ses = incr.std(axis=1, ddof=1) / np.sqrt(n)
    resid = np.sqrt(np.sum(means**2, axis=1))
    se = np.sqrt(np.sum(ses**2, axis=1))
    bounds = 3.0 * se + C * dt**2
    tg, tg_se = _mean_se(gap)
    passed = bool(np.all(resid <= bounds) and tg <= 3.0 * tg_se + C * dt**2 + 1e-12)
    return DecouplingReport(tg, tg_se, resid.tolist(), se.tolist(), bounds.tolist(), C, passed, n, opts.seed)


def convective_apply(v: np.ndarray, f: np.ndarray, d: int, dx: float) -> np.ndarray:
    """``(v . grad) f`` for vector flows ``v`` and ``f`` of shape ``(M+1, d, N...)``."""
    out = np.zeros_like(f)
    for i in range(d):
        out[:, i] = np.sum(v * gradient(f[:, i], d, dx), axis=1)
    return out


__all__ = [
    "McOptions", "McEstimate", "feynman_kac_value", "simulate_particles", "coupled_paths_distance",
    "controlled_costs", "random_smooth_controls", "verify_hamiltonian_decoupling", "sample_density",
    "convective",
]
