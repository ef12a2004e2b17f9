import numpy as np
import pytest
from conftest import random_density, random_flow
from scipy.optimize import linprog

from mfgtorus.fixed_point import heat_flow
from mfgtorus.grid import TorusGrid, torus_cost_matrix
from mfgtorus.measures import (
    DensityFlow,
    TransportError,
    d1T,
    holder_half_seminorm,
    l1_proxy,
    slice_distances,
    wasserstein1_details,
    wasserstein1_torus,
)


def atom(N, i, d=1):
    f = np.zeros((N,) * d)
    f[(i,) * d if np.isscalar(i) else tuple(i)] = N**d
    return f


def lp_w1(mu, nu):
    """Exhaustive transport LP on the full node-to-node cost matrix."""
    d, N = mu.ndim, mu.shape[0]
    C = torus_cost_matrix(TorusGrid(d, N, 2, 1.0))
    n = N**d
    a, b = mu.ravel() / n, nu.ravel() / n
    A = np.zeros((2 * n, n * n))
    for i in range(n):
        A[i, i * n:(i + 1) * n] = 1.0
        A[n + i, i::n] = 1.0
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert res.success
    return res.fun


def test_equal_densities_are_at_distance_zero(rng):
    for d, N in ((1, 16), (2, 8)):
        mu = random_density(rng, (N,) * d)
        assert wasserstein1_torus(mu, mu) == 0.0


def test_atoms_on_the_circle():
    assert wasserstein1_torus(atom(10, 1), atom(10, 9)) == pytest.approx(0.2, abs=1e-14)


def test_two_dimensional_exact_transport_matches_lp(rng):
    for _ in range(20):
        mu = random_density(rng, (8, 8))
        nu = random_density(rng, (8, 8))
        res = wasserstein1_details(mu, nu)
        assert res.method == "exact"
        assert abs(res.value - lp_w1(mu, nu)) <= 1e-9


def test_circle_formula_matches_lp(rng):
    for _ in range(10):
        mu = random_density(rng, (16,))
        nu = random_density(rng, (16,))
        assert abs(wasserstein1_torus(mu, nu) - lp_w1(mu, nu)) <= 1e-12


def test_entropic_path_reports_gap(rng):
    mu = random_density(rng, (8, 8))
    nu = random_density(rng, (8, 8))
    exact = wasserstein1_torus(mu, nu)
    res = wasserstein1_details(mu, nu, exact_limit=10)
    assert res.method == "entropic" and res.gap > 0
    assert exact - 1e-8 <= res.value <= exact + res.gap


def test_entropic_nonconvergence_raises_with_gap(rng):
    mu = random_density(rng, (8, 8))
    nu = random_density(rng, (8, 8))
    with pytest.warns(UserWarning), pytest.raises(TransportError) as info:
        wasserstein1_details(mu, nu, exact_limit=10, reg=1e-3, max_iter=5)
    assert info.value.gap > 0


def test_mass_mismatch_raises():
    with pytest.raises(ValueError):
        wasserstein1_torus(np.ones(8), 1.01 * np.ones(8))


def test_metric_axioms(rng):
    for d, N in ((1, 32), (2, 8)):
        for _ in range(10):
            a, b, c = (random_density(rng, (N,) * d) for _ in range(3))
            ab, ba = wasserstein1_torus(a, b), wasserstein1_torus(b, a)
            assert abs(ab - ba) <= 1e-12
            assert ab <= wasserstein1_torus(a, c) + wasserstein1_torus(c, b) + 1e-8
            assert ab > 0


def test_translated_atoms_move_by_the_arc_length():
    N = 40
    for shift in range(N):
        dist = wasserstein1_torus(atom(N, 3), atom(N, (3 + shift) % N))
        s = shift / N
        assert dist == pytest.approx(min(s, 1 - s), abs=1e-14)
    dist2 = wasserstein1_torus(atom(8, (1, 2), 2), atom(8, (1, 5), 2))
    assert dist2 == pytest.approx(3 / 8, abs=1e-12)


def test_l1_bound(rng):
    for d, N in ((1, 32), (2, 8)):
        g = TorusGrid(d, N, 2, 1.0)
        for _ in range(10):
            a = random_density(rng, (N,) * d)
            b = random_density(rng, (N,) * d)
            bound = np.sqrt(d) / 4 * np.abs(a - b).sum() * g.cell_volume
            assert wasserstein1_torus(a, b) <= bound + 1e-12


def test_d1T_examples(rng):
    g = TorusGrid(1, 32, 6, 1.0)
    r1 = random_flow(rng, g)
    assert d1T(r1, r1, g) == 0.0
    r2 = r1.copy()
    r2[-1] = random_density(rng, (32,))
    assert d1T(r1, r2, g) == wasserstein1_torus(r1[-1], r2[-1])
    r3 = random_flow(rng, g)
    per_slice = [wasserstein1_torus(a, b) for a, b in zip(r1, r3)]
    assert d1T(r1, r3, g) == pytest.approx(max(per_slice), abs=1e-15)
    assert d1T(DensityFlow(g, r1), DensityFlow(g, r3)) == d1T(r1, r3, g)


def test_d1T_two_dimensional(rng):
    g = TorusGrid(2, 8, 3, 1.0)
    r1, r2 = random_flow(rng, g), random_flow(rng, g)
    assert np.allclose(slice_distances(r1, r2, g), [lp_w1(a, b) for a, b in zip(r1, r2)], atol=1e-9)


def test_d1T_grid_mismatch():
    g1, g2 = TorusGrid(1, 8, 2, 1.0), TorusGrid(1, 16, 2, 1.0)
    with pytest.raises(ValueError):
        d1T(DensityFlow(g1, np.ones(g1.scalar_shape())), DensityFlow(g2, np.ones(g2.scalar_shape())))


def test_density_flow_validation():
    g = TorusGrid(1, 8, 2, 1.0)
    with pytest.raises(ValueError):
        DensityFlow(g, 2 * np.ones(g.scalar_shape()))
    bad = np.ones(g.scalar_shape())
    bad[1, 0], bad[1, 1] = -0.5, 2.5
    with pytest.raises(ValueError):
        DensityFlow(g, bad)


def test_holder_seminorm_examples():
    g = TorusGrid(1, 32, 10, 0.5)
    const = np.ones(g.scalar_shape())
    assert holder_half_seminorm(const, g) == 0.0
    x = g.mesh()[0]
    heat = heat_flow(1 + 0.5 * np.cos(2 * np.pi * x), g)
    assert holder_half_seminorm(heat, g) <= 1.0
    # slices 0 and 1 differ by d1 = 0.2 over dt = 0.04
    g2 = TorusGrid(1, 10, 2, 0.08)
    flow = np.stack([atom(10, 1), atom(10, 3), atom(10, 3)])
    assert holder_half_seminorm(flow, g2) == pytest.approx(1.0, abs=1e-12)


def test_l1_proxy_is_max_over_slices(rng):
    g = TorusGrid(1, 16, 3, 1.0)
    a, b = random_flow(rng, g), random_flow(rng, g)
    assert l1_proxy(a, b, g) == pytest.approx(max(np.abs(a[k] - b[k]).sum() / 16 for k in range(4)))
