import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lognls.functional import (DEFAULT_DELTA, energy, energy_gradient, energy_split, f2_growth_constant,
                               f_split, inner_product, lp_mass, max_split_threshold,
                               nehari_project, nehari_residual, nehari_scale, residual)
from lognls.graph import GraphError, apply_laplacian, build_general_graph
from lognls.potentials import ExplicitSpec, PeriodicSpec, make_potential

from conftest import lattice


def direct_energy(g, V, u, p):
    """Straight summation over edges and vertices, no operator reuse."""
    total = 0.0
    for a, b in g.edges:
        total += abs(u[b] - u[a]) ** p
    for x in range(g.vertex_count):
        total += g.exterior_degree[x] * abs(u[x]) ** p
        total += (V[x] + 1.0) * abs(u[x]) ** p
        if u[x] != 0:
            total -= abs(u[x]) ** p * math.log(abs(u[x]) ** p)
    return total / p


def test_energy_of_zero():
    g = lattice([5])
    assert energy(g, np.zeros(5), np.zeros(5)) == 0.0
    assert np.all(energy_gradient(g, np.zeros(5), np.zeros(5)) == 0)
    assert np.all(residual(g, np.zeros(5), np.zeros(5)) == 0)


def test_energy_of_one():
    g = lattice([4, 4])
    assert energy(g, np.zeros(16), np.ones(16)) == 8.0


@pytest.mark.parametrize("sides", [[5], [4, 4], [3, 3, 3]])
def test_energy_of_delta(sides):
    g = lattice(sides)
    u = np.zeros(g.vertex_count)
    u[1] = 1.0
    N = len(sides)
    assert energy(g, np.zeros(g.vertex_count), u) == pytest.approx((2 * N + 1) / 2, abs=1e-15)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("boundary", ["torus", "dirichlet"])
def test_energy_matches_direct_sum(p, boundary, rng):
    g = lattice([4, 3], boundary)
    V = rng.uniform(-0.5, 2, 12)
    u = rng.standard_normal(12)
    u[3] = 0.0
    assert energy(g, V, u, p) == pytest.approx(direct_energy(g, V, u, p), rel=1e-12)
    assert energy(g, V, u, p, general=True) == pytest.approx(direct_energy(g, V, u, p), rel=1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0, 1.7])
@pytest.mark.parametrize("sides", [[6], [3, 4]])
def test_gradient_vs_finite_differences(p, sides, rng):
    g = lattice(sides, "dirichlet")
    n = g.vertex_count
    V = rng.uniform(0, 1, n)
    for _ in range(3):
        u = rng.uniform(0.2, 1.5, n) * rng.choice([-1, 1], n)
        h = 1e-6 * (1 + np.max(np.abs(u)))
        fd = np.array([(energy(g, V, u + h * e, p) - energy(g, V, u - h * e, p)) / (2 * h)
                       for e in np.eye(n)])
        grad = energy_gradient(g, V, u, p)
        assert np.max(np.abs(grad - fd)) / max(1, np.max(np.abs(grad))) < 1e-6


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_residual_equals_gradient(p, rng):
    for g in (lattice([4, 4]), lattice([3, 3], "dirichlet"),
              build_general_graph([(0, 1), (1, 2), (0, 2), (2, 3)], 4)):
        n = g.vertex_count
        V = rng.uniform(0, 1, n)
        u = rng.standard_normal(n)
        u[0] = 0.0
        np.testing.assert_allclose(residual(g, V, u, p), energy_gradient(g, V, u, p),
                                   rtol=0, atol=1e-12)
        np.testing.assert_allclose(residual(g, V, u, p, general=True),
                                   energy_gradient(g, V, u, p), rtol=0, atol=1e-12)


def test_non_finite_rejected():
    g = lattice([3])
    with pytest.raises(GraphError):
        energy(g, np.zeros(3), [0.0, np.inf, 1.0])


# -- F1 / F2 --------------------------------------------------------------

def test_default_delta():
    assert DEFAULT_DELTA == pytest.approx(math.exp(-1.5), rel=1e-15)
    assert max_split_threshold(3.0) == pytest.approx(math.exp(-5 / 6), rel=1e-15)


def test_f_split_at_zero():
    assert f_split(0.0) == (0.0, 0.0, 0.0, 0.0)


@pytest.mark.parametrize("delta", [DEFAULT_DELTA, 0.1, 0.01])
def test_branch_continuity(delta):
    lo = f_split(np.nextafter(delta, 0), delta)
    at = f_split(delta, delta)
    expected = -0.5 * delta ** 2 * math.log(delta ** 2)
    assert abs(at[0] - expected) < 1e-14
    # the outer polynomial at delta, written as in the two-branch formula
    outer = -0.5 * delta ** 2 * (math.log(delta ** 2) + 3) + 2 * delta * delta - 0.5 * delta ** 2
    assert abs(outer - expected) < 1e-14
    assert abs(lo[0] - at[0]) < 1e-14
    assert abs(lo[2] - at[2]) < 1e-12


def test_outer_branch_closed_form():
    delta = 0.15
    s = np.linspace(delta, 10, 50)
    F1, _, _, _ = f_split(s, delta)
    closed = -0.5 * s ** 2 * (math.log(delta ** 2) + 3) + 2 * delta * s - 0.5 * delta ** 2
    np.testing.assert_allclose(F1, closed, rtol=1e-12, atol=1e-13)


def test_f2_minus_f1():
    s = np.linspace(-10, 10, 2001)
    F1, F2, _, _ = f_split(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        target = np.where(s != 0, 0.5 * s ** 2 * np.log(s ** 2), 0.0)
    np.testing.assert_allclose(F2 - F1, target, rtol=0, atol=1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0, 1.5])
def test_f_split_derivatives_by_differences(p):
    delta = max_split_threshold(p) * 0.9
    s = np.concatenate([np.linspace(-4, -0.01, 37), np.linspace(0.013, 4, 41)])
    h = 1e-6
    F1p, F2p, _, _ = f_split(s + h, delta, p)
    F1m, F2m, _, _ = f_split(s - h, delta, p)
    _, _, dF1, dF2 = f_split(s, delta, p)
    np.testing.assert_allclose(dF1, (F1p - F1m) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(dF2, (F2p - F2m) / (2 * h), atol=1e-7)


def test_f1_sign_and_monotonicity():
    s = np.random.default_rng(3).uniform(-50, 50, 10_000)
    F1, _, dF1, _ = f_split(s)
    assert np.all(F1 >= 0)
    assert np.all(s * dF1 >= 0)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_f1_convex_at_threshold(p):
    s = np.linspace(-10, 10, 20_001)
    F1, _, _, _ = f_split(s, max_split_threshold(p), p)
    second = F1[2:] - 2 * F1[1:-1] + F1[:-2]
    assert second.min() >= -1e-9


def test_delta_out_of_range():
    with pytest.raises(ValueError):
        f_split(1.0, 0.5)
    with pytest.raises(ValueError):
        f_split(1.0, 0.0)


def test_growth_constant_stable():
    coarse = f2_growth_constant(3.0, samples=20_001)
    fine = f2_growth_constant(3.0, samples=200_001)
    assert math.isfinite(coarse) and coarse > 0
    assert abs(coarse - fine) <= 1e-3 * fine


def test_energy_split(rng):
    g = lattice([4, 4])
    V = rng.uniform(0, 1, 16)
    zero = energy_split(g, V, np.zeros(16))
    assert zero.phi == 0 and zero.psi == 0
    for _ in range(10):
        u = rng.standard_normal(16) * 2
        J = energy(g, V, u)
        for delta in (DEFAULT_DELTA, 0.05):
            sp = energy_split(g, V, u, delta)
            assert sp.psi >= 0
            assert abs(sp.phi + sp.psi - J) <= 1e-10 * (1 + abs(J))
        assert energy_split(g, V, u, 0.05).psi != energy_split(g, V, u, DEFAULT_DELTA).psi


def test_inner_product_is_quadratic_part(rng):
    g = lattice([5])
    V = rng.uniform(0, 1, 5)
    u = rng.standard_normal(5)
    expected = -u @ apply_laplacian(g, u) + np.sum((V + 1) * u * u)
    assert inner_product(g, V, u, u) == pytest.approx(expected, rel=1e-14)


# -- Nehari ---------------------------------------------------------------

@pytest.mark.parametrize("N", [1, 2, 3])
def test_nehari_scale_of_delta(N):
    g = lattice([5] * N)
    u = np.zeros(g.vertex_count)
    u[0] = 1.0
    assert nehari_scale(g, np.zeros(g.vertex_count), u) == pytest.approx(math.exp(N), rel=1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0, 1.5])
def test_projection(p, rng):
    g = lattice([4, 4])
    V = rng.uniform(0, 1, 16)
    for _ in range(10):
        u = rng.standard_normal(16)
        v, rep = nehari_project(g, V, u, p)
        mass = lp_mass(v, p)
        assert abs(rep.residual_after) <= 1e-9 * (1 + abs(rep.residual_before))
        assert abs(rep.residual_after) <= 1e-9 * (1 + mass)
        assert rep.energy_after == pytest.approx(mass / p, rel=1e-9)
        assert nehari_scale(g, V, v, p) == pytest.approx(1.0, abs=1e-10)


def test_nehari_scale_zero():
    g = lattice([3])
    with pytest.raises(ValueError):
        nehari_scale(g, np.zeros(3), np.zeros(3))


def test_nehari_residual_zero():
    assert nehari_residual(lattice([3]), np.zeros(3), np.zeros(3)) == 0.0


@pytest.mark.parametrize("p", [2.0, 3.0, 1.5, 4.0])
def test_pJ_minus_nehari_is_mass(p, rng):
    g = lattice([3, 3], "dirichlet")
    V = rng.uniform(0, 1, 9)
    for _ in range(10):
        u = rng.standard_normal(9)
        mass = lp_mass(u, p)
        lhs = p * energy(g, V, u, p) - nehari_residual(g, V, u, p)
        assert lhs == pytest.approx(mass, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8).filter(lambda v: any(abs(x) > 1e-3 for x in v)),
       st.sampled_from([2.0, 3.0]))
def test_scaling_identity_property(values, p):
    g = lattice([8])
    V = np.linspace(0, 1, 8)
    u = np.array(values)
    J = energy(g, V, u, p)
    mass = lp_mass(u, p)
    for s in (0.25, 0.5, 1.0, 2.0, 4.0):
        direct = energy(g, V, s * u, p)
        assert abs(direct - (s ** p * J - s ** p * math.log(s) * mass)) <= 1e-9 * (1 + abs(direct))


def test_max_at_manifold(rng):
    g = lattice([4, 4])
    V = make_potential(g, PeriodicSpec([0.0, 0.5, 0.5, 0.0], 2))
    for p in (2.0, 3.0):
        v, _ = nehari_project(g, V, rng.standard_normal(16), p)
        grid = np.logspace(-1, 1, 200)
        vals = [energy(g, V, s * v, p) for s in grid]
        assert int(np.argmax(vals)) == int(np.argmin(np.abs(grid - 1)))
