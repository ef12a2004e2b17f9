import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mfgtorus.grid import (
    DomainError,
    FieldFlow,
    TorusGrid,
    divergence,
    gradient,
    heat_step,
    interp_time,
    laplacian,
    periodic_interp,
    stencil_op,
    torus_distance,
    wrap,
)
from mfgtorus.reports import convergence_orders


@pytest.mark.parametrize("kw", [dict(d=4, N=16, M=4, T=1.0), dict(d=1, N=7, M=4, T=1.0),
                                dict(d=1, N=6, M=4, T=1.0), dict(d=1, N=16, M=1, T=1.0),
                                dict(d=1, N=16, M=4, T=0.0)])
def test_grid_validation(kw):
    with pytest.raises(ValueError):
        TorusGrid(**kw)


def test_grid_geometry():
    g = TorusGrid(2, 16, 10, 0.5)
    assert g.dx == 1 / 16 and g.dt == 0.05
    assert g.scalar_shape() == (11, 16, 16) and g.vector_shape() == (11, 2, 16, 16)
    assert np.allclose(g.axis_coords(), np.arange(16) / 16)
    assert g.points().shape == (256, 2)
    r = g.refine()
    assert (r.N, r.M) == (32, 40)


def test_field_flow_rejects_nonfinite():
    g = TorusGrid(1, 8, 2, 1.0)
    with pytest.raises(ValueError):
        FieldFlow(g, np.full(g.scalar_shape(), np.nan))
    with pytest.raises(ValueError):
        FieldFlow(g, np.zeros((3, 9)))
    assert FieldFlow(g, np.zeros(g.vector_shape())).is_vector


def test_torus_distance_examples():
    assert torus_distance([0.1], [0.9]) == pytest.approx(0.2, abs=1e-15)
    assert torus_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
    with pytest.raises(DomainError):
        torus_distance([1.0], [0.5])
    with pytest.raises(DomainError):
        torus_distance([-0.1], [0.5])


def test_torus_distance_matches_brute_force_over_shifts(rng):
    x = rng.random((1000, 2))
    y = rng.random((1000, 2))
    ours = torus_distance(x, y, d=2)
    shifts = np.array(list(itertools.product((-1, 0, 1), repeat=2)))
    brute = np.min(np.linalg.norm((x - y)[:, None, :] - shifts[None], axis=-1), axis=1)
    assert np.max(np.abs(ours - brute)) <= 1e-15


@given(arrays(float, (5, 3), elements=st.floats(0, 0.999999)), arrays(float, (5, 3), elements=st.floats(0, 0.999999)))
def test_torus_distance_symmetric_and_bounded(x, y):
    a = torus_distance(x, y, d=3)
    b = torus_distance(y, x, d=3)
    assert np.array_equal(a, b)
    assert np.all(a <= np.sqrt(3) / 2 + 1e-15)


def test_wrap_examples():
    assert wrap(0.5) == 0.5
    assert wrap(-0.25) == 0.75
    assert abs(wrap(3.7) - 0.7) <= 1e-15
    assert wrap(-1e-18) < 1.0


@given(arrays(float, 7, elements=st.floats(-1e6, 1e6)))
def test_wrap_idempotent_and_in_cell(x):
    w = wrap(x)
    assert np.all((w >= 0) & (w < 1))
    assert np.array_equal(wrap(w), w)


def test_constant_gradient_is_zero():
    g = TorusGrid(2, 16, 2, 1.0)
    out = stencil_op(np.full(g.spatial_shape, 3.3), "gradient", g)
    assert out.shape == (2, 16, 16) and np.all(out == 0.0)


def _sin_errors(Ns):
    errs = []
    for N in Ns:
        x = np.arange(N) / N
        gx = gradient(np.sin(2 * np.pi * x), 1, 1 / N)[0]
        errs.append(np.max(np.abs(gx - 2 * np.pi * np.cos(2 * np.pi * x))))
    return errs


def test_gradient_error_shrinks_fourfold():
    e64, e128 = _sin_errors([64, 128])
    assert 3.6 <= e64 / e128 <= 4.4
    N = 64
    x = np.arange(N) / N
    # central differences reproduce the sinc-scaled derivative exactly
    scaled = 2 * np.pi * np.sinc(2 * 1 / N) * np.cos(2 * np.pi * x)
    assert np.max(np.abs(gradient(np.sin(2 * np.pi * x), 1, 1 / N)[0] - scaled)) < 1e-12


def _smooth_field(rng, N, d):
    mesh = np.meshgrid(*([np.arange(N) / N] * d), indexing="ij")
    f = np.zeros((N,) * d)
    for _ in range(3):
        k = rng.integers(-3, 4, size=d)
        f += rng.normal() * np.cos(2 * np.pi * (sum(ki * xi for ki, xi in zip(k, mesh)) + rng.random()))
    return f


@pytest.mark.parametrize("d", [1, 2, 3])
def test_divergence_of_gradient_is_wide_laplacian(rng, d):
    N = 16
    f = _smooth_field(rng, N, d)
    lhs = divergence(gradient(f, d, 1 / N), d, 1 / N)
    rhs = laplacian(f, d, 1 / N, stencil="wide")
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


@pytest.mark.parametrize("kind", ["gradient", "laplacian", "divergence"])
def test_stencils_are_linear(rng, kind):
    g = TorusGrid(2, 16, 2, 1.0)
    shape = (2, 16, 16) if kind == "divergence" else (16, 16)
    f, h = rng.normal(size=shape), rng.normal(size=shape)
    a, b = 1.7, -0.4
    lhs = stencil_op(a * f + b * h, kind, g)
    rhs = a * stencil_op(f, kind, g) + b * stencil_op(h, kind, g)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_stencil_shape_mismatch():
    g = TorusGrid(2, 8, 2, 1.0)
    with pytest.raises(ValueError):
        stencil_op(np.zeros((8, 8)), "divergence", g)
    with pytest.raises(ValueError):
        stencil_op(np.zeros((2, 8, 8)), "laplacian", g)
    with pytest.raises(ValueError):
        stencil_op(np.zeros((8, 8)), "curl", g)


@pytest.mark.parametrize("kind", ["gradient", "laplacian", "divergence"])
def test_second_order_convergence(kind):
    errs = []
    for N in (32, 64, 128):
        x, y = np.meshgrid(np.arange(N) / N, np.arange(N) / N, indexing="ij")
        f = np.sin(2 * np.pi * x) * np.cos(4 * np.pi * y)
        if kind == "gradient":
            exact = np.stack([2 * np.pi * np.cos(2 * np.pi * x) * np.cos(4 * np.pi * y),
                              -4 * np.pi * np.sin(2 * np.pi * x) * np.sin(4 * np.pi * y)])
            got = gradient(f, 2, 1 / N)
        elif kind == "laplacian":
            exact = -(4 + 16) * np.pi**2 * f
            got = laplacian(f, 2, 1 / N)
        else:
            F = np.stack([f, np.cos(2 * np.pi * y)])
            exact = 2 * np.pi * np.cos(2 * np.pi * x) * np.cos(4 * np.pi * y) - 2 * np.pi * np.sin(2 * np.pi * y)
            got = divergence(F, 2, 1 / N)
        errs.append(np.max(np.abs(got - exact)))
    for order in convergence_orders(errs):
        assert 1.8 <= order <= 2.2


def test_index_wrap():
    f = np.arange(8.0)
    g = laplacian(f, 1, 1.0)
    assert g[0] == f[1] - 2 * f[0] + f[7]
    assert g[7] == f[0] - 2 * f[7] + f[6]


def test_heat_step_is_exact_on_modes():
    N = 32
    x = np.arange(N) / N
    f = 1 + 0.5 * np.cos(2 * np.pi * 3 * x)
    out = heat_step(f, 1, 0.1)
    exact = 1 + 0.5 * np.exp(-2 * np.pi**2 * 9 * 0.1) * np.cos(2 * np.pi * 3 * x)
    assert np.max(np.abs(out - exact)) < 1e-14


def test_periodic_interp_nodes_constants_and_shifts(rng):
    N, d = 8, 2
    vals = rng.normal(size=(N, N))
    pts = np.array([[3 / N, 5 / N], [0.0, 0.875]])
    assert np.allclose(periodic_interp(vals, pts, d), [vals[3, 5], vals[0, 7]], atol=0, rtol=0)
    const = np.full((N, N), 0.37)
    q = rng.random((50, 2))
    assert np.all(periodic_interp(const, q, d) == 0.37)
    shifted = periodic_interp(vals, q + np.array([2.0, -3.0]), d)
    assert np.max(np.abs(shifted - periodic_interp(vals, q, d))) <= 1e-13


def test_interp_time_bounds():
    g = TorusGrid(1, 8, 4, 1.0)
    flow = np.arange(5.0)[:, None] * np.ones((1, 8))
    assert np.allclose(interp_time(flow, g, 0.6), 2.4)
    with pytest.raises(DomainError):
        interp_time(flow, g, 1.5)


@settings(max_examples=25, deadline=None)
@given(arrays(float, 16, elements=st.floats(-10, 10)), st.floats(0, 1))
def test_heat_step_preserves_mean(f, tau):
    out = heat_step(f, 1, tau)
    assert abs(out.mean() - f.mean()) <= 1e-12 * (1 + np.abs(f).max())
