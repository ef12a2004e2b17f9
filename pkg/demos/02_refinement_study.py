"""Residuals of the equilibrium system under joint refinement (M grows like N^2).

    python demos/02_refinement_study.py
"""

from __future__ import annotations

import numpy as np

from mfgtorus.costs import KernelCost
from mfgtorus.fixed_point import solve_equilibrium
from mfgtorus.fpk import fpk_residual
from mfgtorus.grid import TorusGrid
from mfgtorus.hjb import hjb_report, momentum_residual
from mfgtorus.reports import convergence_orders

cost = KernelCost.from_parts(1, p_bar="0.1 * cos(2pi*(x1 - y1))")
rows = {"hjb": [], "momentum": [], "fpk": []}
for N, M in ((64, 100), (128, 400), (256, 1600)):
    grid = TorusGrid(1, N, M, 0.5)
    mu = 1.0 + 0.5 * np.cos(2 * np.pi * grid.mesh()[0])
    eq = solve_equilibrium(cost, mu, grid, tol=1e-8, max_iter=80)
    reps = {**hjb_report(eq.u, eq.p, eq.h, grid), **momentum_residual(eq.v, eq.p, eq.h, grid),
            **fpk_residual(eq.rho, eq.v, eq.mu, grid)}
    for name in rows:
        rows[name].append(reps[name])
    print(f"N = {N:3d}, M = {M:4d}: {eq.diagnostics.iterations} iterations, {eq.diagnostics.wall_time:.1f}s")

for name, reps in rows.items():
    mx = [r.max_norm for r in reps]
    rms = [r.l2_norm for r in reps]
    print(f"{name:9s} max {' '.join(f'{e:.2e}' for e in mx)}  orders {' '.join(f'{o:.2f}' for o in convergence_orders(mx))}")
    print(f"{'':9s} rms {' '.join(f'{e:.2e}' for e in rms)}  orders {' '.join(f'{o:.2f}' for o in convergence_orders(rms))}")
