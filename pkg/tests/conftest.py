from __future__ import annotations

import os

for _backend in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")

import numpy as np
import pytest

from mfgtorus.costs import KernelCost
from mfgtorus.fixed_point import solve_equilibrium
from mfgtorus.grid import TorusGrid

ACCEPTANCE_LINES: list[str] = []


def demo_problem(N: int = 64, M: int = 100, T: float = 0.5):
    grid = TorusGrid(1, N, M, T)
    x = grid.mesh()[0]
    mu = 1.0 + 0.5 * np.cos(2 * np.pi * x)
    cost = KernelCost.from_parts(1, p_bar="0.1 * cos(2pi*(x1 - y1))")
    return grid, cost, mu


@pytest.fixture(scope="session")
def demo():
    grid, cost, mu = demo_problem()
    eq = solve_equilibrium(cost, mu, grid, theta=0.5, tol=1e-6, max_iter=50)
    return grid, cost, mu, eq


@pytest.fixture(scope="session")
def refinement():
    """Demo equilibria at (N, M) = (64, 100), (128, 400), (256, 1600)."""
    out = []
    for N, M in ((64, 100), (128, 400), (256, 1600)):
        grid, cost, mu = demo_problem(N=N, M=M)
        out.append((grid, cost, mu, solve_equilibrium(cost, mu, grid, theta=0.5, tol=1e-8, max_iter=80)))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density(rng, shape, modes: int = 3, strength: float = 0.8) -> np.ndarray:
    """Smooth positive density with unit rectangle-rule mass."""
    d, N = len(shape), shape[0]
    mesh = np.meshgrid(*([np.arange(N) / N] * d), indexing="ij")
    f = np.ones(shape)
    for _ in range(modes):
        k = rng.integers(-2, 3, size=d)
        f = f + strength / modes * rng.uniform(-1, 1) * np.cos(
            2 * np.pi * (sum(ki * xi for ki, xi in zip(k, mesh)) + rng.uniform()))
    f = np.clip(f, 0.05, None)
    return f / (f.sum() / N**d)


def random_flow(rng, grid: TorusGrid) -> np.ndarray:
    a = random_density(rng, grid.spatial_shape)
    b = random_density(rng, grid.spatial_shape)
    s = (grid.times / grid.T).reshape((-1,) + (1,) * grid.d)
    return (1 - s) * a[None] + s * b[None]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
