import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from simplexlab.errors import (ChartBoundaryError, DegenerateError, EmptyIntersectionError, OffVarietyError,
                               SingularGramError)
from simplexlab.euclid_config import (PolynomialVariety, Simplex, admissible_charts, chart_integrate, gram_weight,
                                      intersect_spheres, parallelotope_volume, simplex_invariants, sphere_area)


def ones(X):
    return np.ones(len(X))


def random_slice(rng, d, m):
    c = rng.standard_normal((m, d))
    x = rng.standard_normal(d)
    return c, np.sum((x - c) ** 2, axis=1), x


def test_equilateral_invariants():
    inv = simplex_invariants(Simplex.equilateral_triangle())
    assert np.allclose(inv.vertex_heights, math.sqrt(3) / 2)
    assert inv.d == pytest.approx(1.0)
    assert inv.delta == pytest.approx(0.8660, abs=1e-4)


def test_right_triangle_invariants():
    inv = simplex_invariants(Simplex(np.array([[0, 0], [1, 0], [0, 1.0]])))
    assert inv.r == pytest.approx(1 / math.sqrt(2))
    assert inv.d == pytest.approx(math.sqrt(2))
    assert inv.delta == pytest.approx(0.5)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 7])
def test_regular_simplex_heights_match_least_squares(n):
    V = Simplex.regular(n)
    inv = simplex_invariants(V)
    v = V.vertices
    for j in range(n):
        others = np.delete(v, j, axis=0)
        A = (others[1:] - others[0]).T
        if A.shape[1]:
            coef = np.linalg.lstsq(A, v[j] - others[0], rcond=None)[0]
            foot = others[0] + A @ coef
        else:
            foot = others[0]
        assert inv.vertex_heights[j] == pytest.approx(np.linalg.norm(v[j] - foot), rel=1e-12)
    assert np.ptp(inv.vertex_heights) <= 1e-12
    assert 0 < inv.delta <= 1


def test_degenerate_simplex_rejected():
    with pytest.raises(DegenerateError):
        Simplex(np.array([[0, 0], [1, 0], [2, 0.0]]))


def test_two_sphere_circle():
    sl = intersect_spheres([[0, 0, 0], [1, 0, 0]], [1, 1])
    assert np.allclose(sl.center, [0.5, 0, 0])
    assert sl.radius == pytest.approx(math.sqrt(3) / 2)
    assert np.allclose(np.abs(sl.normal_basis), [[1, 0, 0]])
    assert sl.sphere_dim == 1


def test_single_sphere_slice():
    sl = intersect_spheres([[0, 0]], [4])
    assert sl.radius == 2 and sl.normal_basis.shape == (0, 2) and sl.sphere_dim == 1


def test_empty_and_tangent_intersections():
    with pytest.raises(EmptyIntersectionError):
        intersect_spheres([[0, 0], [3, 0]], [1, 1])
    with pytest.warns(RuntimeWarning):
        intersect_spheres([[0, 0], [2, 0]], [1, 1 + 1e-12])
    with pytest.raises(DegenerateError):
        intersect_spheres([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [4, 4, 4])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.data())
def test_slice_invariants(d, data):
    m = data.draw(st.integers(1, d - 1))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    c, t, _ = random_slice(rng, d, m)
    sl = intersect_spheres(c, t)
    nb = sl.normal_basis
    assert np.allclose(nb @ nb.T, np.eye(len(nb)), atol=1e-12)
    assert sl.radius > 0 and sl.sphere_dim == d - m
    pts = sl.sample(rng, 20)
    assert np.allclose(np.sum((pts[:, None, :] - c[None]) ** 2, axis=2), t, atol=1e-9 * t.max())


def test_gram_weight_examples():
    assert gram_weight([1.0, 0.0], [[0.0, 0.0]]).weight == pytest.approx(0.5)
    g = gram_weight([1.0, 1.0], [[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(g.matrix, np.eye(2)) and g.weight == pytest.approx(0.25)
    tri = np.array([[0, 0, 0], [1, 0, 0], [0.5, math.sqrt(3) / 2, 0]])
    apex = np.array([0.5, math.sqrt(3) / 6, math.sqrt(2 / 3)])
    g = gram_weight(apex, tri, [1, 1, 1])
    assert np.allclose(g.matrix, [[1, .5, .5], [.5, 1, .5], [.5, .5, 1]])
    assert g.determinant == pytest.approx(0.5)
    assert g.weight == pytest.approx(0.17678, abs=1e-5)
    assert g.weight == pytest.approx(2**-3 * math.sqrt(2))


def test_gram_errors():
    with pytest.raises(SingularGramError):
        gram_weight([2.0, 0.0], [[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(OffVarietyError):
        gram_weight([1.0, 0.0], [[0.0, 0.0]], [4.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.data())
def test_parallelotope_identity(d, data):
    m = data.draw(st.integers(1, d - 1))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    c, _, x = random_slice(rng, d, m)
    g = gram_weight(x, c)
    vecs = x - c
    r = np.linalg.qr(vecs.T, mode="r")
    assert g.volume == pytest.approx(np.prod(np.abs(np.diag(r))), rel=1e-10)
    assert parallelotope_volume(vecs) == pytest.approx(g.volume, rel=1e-10)
    assert g.weight == pytest.approx(2.0**-m / math.sqrt(np.linalg.det(vecs @ vecs.T)), rel=1e-12)


@pytest.mark.parametrize("r", [0.3, 1.0, 2.5])
def test_circle_chart_mass_is_pi(r):
    res = chart_integrate(PolynomialVariety.from_spheres([[0.0, 0.0]], [r * r]), ones, level=4)
    assert res.value == pytest.approx(math.pi, rel=1e-10)


def test_two_sphere_circle_chart_mass():
    c = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    t = np.array([1.0, 1.0])
    sl = intersect_spheres(c, t)
    x = sl.center + sl.radius * sl.plane_basis[0]
    D = gram_weight(x, c).determinant
    res = chart_integrate(PolynomialVariety.from_spheres(c, t), ones, level=4)
    assert res.value == pytest.approx(2 * math.pi * sl.radius * 0.25 / math.sqrt(D), rel=1e-10)


def test_half_space_gets_half_mass():
    rng = np.random.default_rng(5)
    c, t, _ = random_slice(rng, 3, 1)
    var = PolynomialVariety.from_spheres(c, t)
    full = chart_integrate(var, ones, level=5).value
    sl = intersect_spheres(c, t)
    for _ in range(3):
        n = rng.standard_normal(3)
        half = chart_integrate(var, lambda X: ((X - sl.center) @ n > 0).astype(float), level=5).value
        assert half == pytest.approx(full / 2, rel=1e-6)


@pytest.mark.parametrize("d,m", [(3, 1), (3, 2), (4, 2), (5, 3)])
def test_weight_formula_and_chart_independence(d, m):
    rng = np.random.default_rng(d * 10 + m)
    c, t, x = random_slice(rng, d, m)
    var = PolynomialVariety.from_spheres(c, t)
    sl = intersect_spheres(c, t)
    exact = gram_weight(x, c).weight * sl.area()
    assert sl.area() == pytest.approx(sphere_area(d - m, sl.radius))
    assert chart_integrate(var, ones, level=4).value == pytest.approx(exact, rel=1e-4)
    charts = admissible_charts(var)
    a = rng.standard_normal(d)
    g = lambda X: np.exp(0.3 * X @ a)
    v1 = chart_integrate(var, g, coordinates=charts[0], level=4).value
    v2 = chart_integrate(var, g, coordinates=charts[-1], level=4).value
    assert v1 == pytest.approx(v2, rel=1e-6)


def test_rotation_equivariance():
    rng = np.random.default_rng(11)
    c, t, x = random_slice(rng, 4, 2)
    U = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    g0, g1 = gram_weight(x, c), gram_weight(U @ x, c @ U.T)
    assert g1.determinant == pytest.approx(g0.determinant, rel=1e-12)
    assert g1.weight == pytest.approx(g0.weight, rel=1e-12)
    assert intersect_spheres(c @ U.T, t).radius == pytest.approx(intersect_spheres(c, t).radius, rel=1e-12)
    i0 = chart_integrate(PolynomialVariety.from_spheres(c, t), ones, level=4).value
    i1 = chart_integrate(PolynomialVariety.from_spheres(c @ U.T, t), ones, level=4).value
    assert i1 == pytest.approx(i0, rel=1e-10)


def test_box_mode_and_whole_slice_match_arc_length_oracle():
    c = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    var = PolynomialVariety.from_spheres(c, [1.0, 1.0])
    rho = math.sqrt(3) / 2
    seed = np.array([0.5, rho, 0.0])

    def profile(r2):
        return np.where(r2 < 0.25, np.exp(-1 / np.maximum(1 - r2 / 0.25, 1e-300)), 0.0)

    bump = lambda X: profile(np.sum((X - seed) ** 2, axis=1))
    # on this circle the weight is constant, so the integral is weight * arc-length integral
    half_angle = 2 * math.asin(0.25 / rho)
    arc = quad(lambda a: float(profile(2 * rho**2 * (1 - math.cos(a)))), -half_angle, half_angle,
               epsabs=1e-14, epsrel=1e-13)[0]
    exact = gram_weight(seed, c).weight * rho * arc
    box = chart_integrate(var, bump, box=([-0.55], [0.55]), seed=seed, coordinates=(0, 1), level=8)
    assert box.value == pytest.approx(exact, rel=1e-10)
    assert chart_integrate(var, bump, level=9).value == pytest.approx(exact, rel=1e-8)


def test_box_mode_rejects_support_at_edge():
    var = PolynomialVariety.from_spheres([[0.0, 0, 0], [1.0, 0, 0]], [1.0, 1.0])
    seed = np.array([0.5, math.sqrt(3) / 2, 0.0])
    with pytest.raises(ChartBoundaryError):
        chart_integrate(var, ones, box=([-0.3], [0.3]), seed=seed, level=4)
    with pytest.raises(OffVarietyError):
        chart_integrate(var, ones, box=([-0.3], [0.3]), seed=seed + 0.1, level=4)
