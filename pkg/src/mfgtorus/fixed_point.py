"""Best-response map of the game and the damped Picard search for its fixed point.

The map is the composition

    rho --phi1--> (p, h) --phi2--> v --phi3--> rho'

of cost evaluation, optimal feedback from the HJB solve, and the forward
density of the controlled diffusion.  A Nash equilibrium flow satisfies
``rho = apply_phi(rho)``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fpk, hjb
from .costs import CostFunctional, KernelCost, kappa_bound, p_half_two_norm, point_norm
from .grid import TorusGrid, gradient
from .measures import d1T, holder_half_seminorm, l1_proxy, normalize

logger = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    """Raised when the Picard iteration exhausts ``max_iter``.

    The last iterate is attached as ``equilibrium`` and the residual history
    as ``history``.
    """

    def __init__(self, message: str, equilibrium: "Equilibrium"):
        super().__init__(message)
        self.equilibrium = equilibrium
        self.history = equilibrium.diagnostics.d1T_residuals


@dataclass
class Diagnostics:
    converged: bool = False
    iterations: int = 0
    d1T_residuals: list[float] = field(default_factory=list)  # NaN where not certified
    l1_residuals: list[float] = field(default_factory=list)
    thetas: list[float] = field(default_factory=list)
    lipschitz_ratios: list[float] = field(default_factory=list)
    certified_residual: float = float("nan")
    v_sup: float = float("nan")
    v_lip: float = float("nan")
    p_02: float = float("nan")
    h_4: float = float("nan")
    p_half_2: float = float("nan")
    kappa: float = float("nan")
    norm_budget: list[dict] = field(default_factory=list)
    rho_holder: float = float("nan")
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Equilibrium:
    grid: TorusGrid
    mu: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    h: np.ndarray
    w: np.ndarray
    u: np.ndarray
    v: np.ndarray
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


def phi1(cost: CostFunctional, rho: np.ndarray, grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    """Cost pair ``(p[rho], h[rho])``; ``h`` reads the terminal slice."""
    return cost.p(rho, grid), cost.h(rho[-1], grid)


def phi2(p: np.ndarray, h: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Optimal feedback ``v = grad u`` for running cost ``p`` and terminal cost ``h``."""
    return hjb.solve_hjb(p, h, grid).v


def phi3(v: np.ndarray, mu: np.ndarray, grid: TorusGrid, **fpk_opts) -> np.ndarray:
    """Density flow of the diffusion with drift ``-v`` started from ``mu``."""
    return fpk.solve_initial_value(v, mu, grid, **fpk_opts).rho


def apply_phi(cost: CostFunctional, rho: np.ndarray, mu: np.ndarray, grid: TorusGrid, **fpk_opts) -> np.ndarray:
    p, h = phi1(cost, rho, grid)
    return phi3(phi2(p, h, grid), mu, grid, **fpk_opts)


def _best_response(cost, rho, mu, grid, fpk_opts):
    p, h = phi1(cost, rho, grid)
    sol = hjb.solve_hjb(p, h, grid)
    new = fpk.solve_initial_value(sol.v, mu, grid, **fpk_opts)
    return p, h, sol, new


def heat_flow(mu: np.ndarray, grid: TorusGrid, **fpk_opts) -> np.ndarray:
    """Density flow with no control, the default first iterate."""
    return phi3(np.zeros(grid.vector_shape()), mu, grid, **fpk_opts)


def random_seed_flow(mu: np.ndarray, grid: TorusGrid, seed: int, strength: float = 0.5) -> np.ndarray:
    """Smooth random density flow with ``rho(0) = mu`` for multi-start searches."""
    rng = np.random.default_rng(seed)
    mesh = grid.mesh()
    flow = np.empty(grid.scalar_shape())
    base = heat_flow(mu, grid)
    k = rng.integers(-2, 3, size=grid.d)
    if not np.any(k):
        k[0] = 1
    phase = rng.uniform()
    bump = 1.0 + 0.9 * np.cos(2 * np.pi * (sum(ki * xi for ki, xi in zip(k, mesh)) + phase))
    bump /= bump.mean()
    for j, t in enumerate(grid.times):
        s = strength * t / grid.T
        flow[j] = (1 - s) * base[j] + s * bump
    return normalize(flow, grid)


def measure_norms(eq: Equilibrium, cost: CostFunctional) -> None:
    """Fill the norm fields of ``eq.diagnostics`` from the stored fields."""
    g, diag = eq.grid, eq.diagnostics
    diag.v_sup = float(np.max(np.sqrt(np.sum(eq.v**2, axis=1))))
    diag.v_lip = diag.v_sup + sum(
        float(np.max(np.abs(gradient(eq.v[:, i], g.d, g.dx)))) for i in range(g.d)
    )
    diag.p_02 = point_norm(eq.p, 2, g, time_axis=True)
    diag.h_4 = point_norm(eq.h, 4, g)
    diag.p_half_2 = p_half_two_norm(eq.p, g)
    if isinstance(cost, KernelCost):
        diag.kappa = kappa_bound(cost, g)
    diag.rho_holder = holder_half_seminorm(eq.rho, g)


def solve_equilibrium(
    cost: CostFunctional,
    mu: np.ndarray,
    grid: TorusGrid,
    *,
    theta: float = 0.5,
    tol: float = 1e-6,
    max_iter: int = 50,
    seed_flow: np.ndarray | None = None,
    stall_window: int = 10,
    max_halvings: int = 3,
    fpk_opts: dict | None = None,
) -> Equilibrium:
    """Damped Picard iteration ``rho <- (1 - theta) rho + theta Phi(rho)``.

    The L1 distance between ``rho_k`` and ``Phi(rho_k)`` is monitored every
    sweep; once it implies ``d1T <= tol`` the true ``d1T`` is computed and,
    if within ``tol``, ``rho_k`` is returned with its cost, value and control.
    After ``stall_window`` consecutive non-decreasing residuals ``theta`` is
    halved, at most ``max_halvings`` times.

    Raises:
        NonConvergenceError: after ``max_iter`` sweeps without a certificate.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    fpk_opts = fpk_opts or {}
    t0 = time.perf_counter()
    mu = np.asarray(mu, dtype=float)
    mu = mu / (mu.sum() * grid.cell_volume)
    rho = heat_flow(mu, grid, **fpk_opts) if seed_flow is None else normalize(np.asarray(seed_flow, float), grid)
    diag = Diagnostics()
    kappa = kappa_bound(cost, grid) if isinstance(cost, KernelCost) else float("nan")
    diam_factor = np.sqrt(grid.d) / 4.0  # d1 <= sqrt(d)/2 * TV = sqrt(d)/4 * L1
    stall = halvings = 0
    prev = np.inf
    last = None
    for it in range(1, max_iter + 1):
        p, h, sol, new = _best_response(cost, rho, mu, grid, fpk_opts)
        l1 = l1_proxy(rho, new.rho, grid)
        dist = float("nan")
        if diam_factor * l1 <= tol or it == max_iter:
            dist = d1T(rho, new.rho, grid)
        diag.l1_residuals.append(l1)
        diag.d1T_residuals.append(dist)
        diag.thetas.append(theta)
        diag.lipschitz_ratios.append(l1 / prev if np.isfinite(prev) and prev > 0 else float("nan"))
        diag.norm_budget.append({
            "iteration": it,
            "p_02": point_norm(p, 2, grid, time_axis=True),
            "h_4": point_norm(h, 4, grid),
            "kappa": kappa,
        })
        logger.info("iter %d: L1 %.3e d1T %s theta %.3g", it, l1, f"{dist:.3e}" if np.isfinite(dist) else "-", theta)
        last = (p, h, sol)
        if np.isfinite(dist) and dist <= tol:
            diag.converged = True
            diag.certified_residual = dist
            break
        stall = stall + 1 if l1 >= prev else 0
        prev = l1
        if stall >= stall_window and halvings < max_halvings:
            theta *= 0.5
            halvings += 1
            stall = 0
        if theta == 1.0:
            rho = new.rho.copy()
        else:
            rho = normalize((1.0 - theta) * rho + theta * new.rho, grid)
            rho[0] = mu
    else:
        diag.certified_residual = diag.d1T_residuals[-1]
    diag.iterations = len(diag.l1_residuals)
    p, h, sol = last
    eq = Equilibrium(grid, mu, rho, p, h, sol.w, sol.u, sol.v, diag)
    measure_norms(eq, cost)
    diag.wall_time = time.perf_counter() - t0
    if not diag.converged:
        raise NonConvergenceError(
            f"no fixed point within {max_iter} iterations (last d1T {diag.certified_residual:.3e})", eq
        )
    return eq


def solve_multistart(cost: CostFunctional, mu: np.ndarray, grid: TorusGrid, seeds, **kw) -> list:
    """Run the iteration from several initial flows; seed 0 means the heat flow.

    Returns a list of ``(seed, Equilibrium or NonConvergenceError)``.
    """
    out = []
    for s in seeds:
        seed_flow = None if s == 0 else random_seed_flow(mu, grid, s)
        try:
            out.append((s, solve_equilibrium(cost, mu, grid, seed_flow=seed_flow, **kw)))
        except NonConvergenceError as exc:
            out.append((s, exc))
    return out


def rebuild_control(eq: Equilibrium) -> None:
    """Recompute ``u`` and ``v`` from ``w`` (used after loading a bundle)."""
    eq.u, eq.v = hjb.value_and_control(eq.w, eq.grid)


@dataclass
class ExploitabilityReport:
    base_cost: float
    base_se: float
    gaps: list[float]
    gap_ses: list[float]
    flagged: list[int]
    n: int
    seed: int

    @property
    def passed(self) -> bool:
        return not self.flagged

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def exploitability(eq: Equilibrium, cost: CostFunctional, perturbations, mc_opts) -> ExploitabilityReport:
    """Monte-Carlo cost gaps ``J[v* + dv] - J[v*]`` under common random numbers.

    A perturbation is flagged when its gap is below ``-3 SE``, i.e. when a
    deviating player measurably beats the equilibrium control.
    """
    from .oracles import controlled_costs

    g = eq.grid
    p, h = phi1(cost, eq.rho, g)
    controls = [eq.v] + [eq.v + np.asarray(dv, dtype=float) for dv in perturbations]
    costs = controlled_costs(controls, p, h, g, mc_opts, mu=eq.mu)
    n = costs.shape[1]
    base = costs[0]
    gaps, ses, flagged = [], [], []
    for i in range(1, costs.shape[0]):
        diff = costs[i] - base
        gap = float(np.mean(diff))
        se = float(np.std(diff, ddof=1) / np.sqrt(n))
        gaps.append(gap)
        ses.append(se)
        if gap < -3.0 * se:
            flagged.append(i - 1)
    return ExploitabilityReport(float(np.mean(base)), float(np.std(base, ddof=1) / np.sqrt(n)),
                                gaps, ses, flagged, n, mc_opts.seed)
