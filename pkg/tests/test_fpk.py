import numpy as np
import pytest
from conftest import random_density

from mfgtorus.fpk import CFLError, fpk_field_residual, fpk_residual, mass_errors, solve_initial_value
from mfgtorus.grid import TorusGrid
from mfgtorus.measures import d1T, wasserstein1_torus
from mfgtorus.reports import convergence_orders


def cos_mu(g, amp=0.5):
    return 1 + amp * np.cos(2 * np.pi * g.mesh()[0])


def test_uniform_density_stays_uniform():
    g = TorusGrid(2, 16, 10, 1.0)
    sol = solve_initial_value(np.zeros(g.vector_shape()), np.ones(g.spatial_shape), g)
    assert np.all(sol.rho == 1.0)
    rep = fpk_residual(sol.rho, np.zeros(g.vector_shape()), np.ones(g.spatial_shape), g)
    assert rep["fpk"].max_norm == 0.0 and rep["fpk_initial"].max_norm == 0.0


def test_heat_mode_decay():
    g = TorusGrid(1, 128, 200, 0.5)
    sol = solve_initial_value(np.zeros(g.vector_shape()), cos_mu(g), g)
    x = g.mesh()[0]
    for k, t in enumerate(g.times):
        amp = 2 * np.mean((sol.rho[k] - 1) * np.cos(2 * np.pi * x))
        exact = 0.5 * np.exp(-2 * np.pi**2 * t)
        assert abs(amp / exact - 1) <= 1e-3


@pytest.mark.parametrize("c", [0.7, -1.3])
def test_constant_drift_translates(c):
    g = TorusGrid(1, 128, 200, 0.5)
    v = np.full(g.vector_shape(), c)
    sol = solve_initial_value(v, cos_mu(g), g)
    x = g.mesh()[0]
    for k, t in enumerate(g.times):
        exact = 1 + 0.5 * np.exp(-2 * np.pi**2 * t) * np.cos(2 * np.pi * (x + c * t))
        assert wasserstein1_torus(sol.rho[k], exact) <= 2 * g.dx


def manufactured(g):
    t = g.times[:, None]
    x = g.mesh()[0]
    s, co = np.sin(2 * np.pi * x), np.cos(2 * np.pi * x)
    rho = 1 + 0.3 * np.exp(-t) * co
    v = 0.5 * np.cos(np.pi * t) * s
    rho_t = -0.3 * np.exp(-t) * co
    rho_x = -0.6 * np.pi * np.exp(-t) * s
    rho_xx = -1.2 * np.pi**2 * np.exp(-t) * co
    v_x = np.pi * np.cos(np.pi * t) * co
    source = rho_t - (rho_x * v + rho * v_x) - 0.5 * rho_xx
    return rho, v[:, None], source


def test_manufactured_residual_recovers_the_source():
    errs = []
    for N in (32, 64, 128):
        g = TorusGrid(1, N, N, 1.0)
        rho, v, source = manufactured(g)
        errs.append(np.max(np.abs(fpk_field_residual(rho, v, g) - source)))
    assert errs[-1] < 1e-2
    assert all(o >= 1.8 for o in convergence_orders(errs))


def smooth_control(g, amp=1.0):
    x = g.mesh()[0]
    t = g.times[:, None]
    return (amp * np.sin(2 * np.pi * x) * (1 + t) + 0.3 * amp * np.cos(4 * np.pi * x))[:, None]


def test_solved_flow_residual_decreases():
    errs = []
    for N, M in ((32, 25), (64, 100), (128, 400)):
        g = TorusGrid(1, N, M, 0.5)
        v = smooth_control(g)
        sol = solve_initial_value(v, cos_mu(g), g)
        errs.append(fpk_residual(sol.rho, v, cos_mu(g), g)["fpk"].l2_norm)
    assert errs[0] > errs[1] > errs[2]
    assert convergence_orders(errs)[-1] >= 1.5


def test_mass_conservation_and_holder_estimate(rng):
    g = TorusGrid(2, 16, 40, 0.5)
    x, y = g.mesh()
    for _ in range(3):
        a, b = rng.normal(size=2)
        v = np.stack([a * np.sin(2 * np.pi * y), b * np.cos(2 * np.pi * x)])
        v = np.broadcast_to(v, g.vector_shape()).copy()
        mu = random_density(rng, g.spatial_shape)
        sol = solve_initial_value(v, mu, g)
        assert np.max(mass_errors(sol.rho, g)) <= 1e-12
        assert sol.rho.min() >= -1e-14 and sol.clip_mass <= 1e-12
        vmax = np.max(np.linalg.norm(v, axis=1))
        const = 1 + np.sqrt(g.T) * vmax
        for i in range(0, g.M + 1, 4):
            for j in range(i + 4, g.M + 1, 4):
                lag = g.times[j] - g.times[i]
                assert wasserstein1_torus(sol.rho[i], sol.rho[j]) <= const * np.sqrt(lag) + 2 * g.dx


def test_stability_under_shrinking_perturbations():
    g = TorusGrid(1, 64, 50, 0.5)
    v = smooth_control(g)
    x = g.mesh()[0]
    bump = np.broadcast_to(np.cos(2 * np.pi * (x + 0.1)), g.scalar_shape())[:, None]
    base = solve_initial_value(v, cos_mu(g), g).rho
    dists = [d1T(base, solve_initial_value(v + eps * bump, cos_mu(g), g).rho, g) for eps in (0.2, 0.1, 0.05)]
    for big, small in zip(dists[:-1], dists[1:]):
        assert small / big <= 0.6


def test_cfl_errors_and_validation():
    g = TorusGrid(1, 64, 2, 1.0)
    with pytest.raises(CFLError) as info:
        solve_initial_value(np.full(g.vector_shape(), 100.0), np.ones(64), g, max_substeps=10)
    assert info.value.required > 10
    with pytest.raises(ValueError):
        solve_initial_value(np.zeros(g.vector_shape()), np.ones(64), g, cfl=0.95)
    with pytest.raises(ValueError):
        solve_initial_value(np.zeros(g.scalar_shape()), np.ones(64), g)


def test_initial_density_is_renormalized():
    g = TorusGrid(1, 32, 4, 0.1)
    sol = solve_initial_value(np.zeros(g.vector_shape()), 3.0 * cos_mu(g), g)
    assert np.allclose(sol.rho[0], cos_mu(g), atol=1e-15)
