import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from simplexlab.errors import UnderResolvedError
from simplexlab.euclid_config import Simplex, intersect_spheres
from simplexlab.measure_forge import PointMassMeasure, build_cantor_dust, middle_thirds_ifs, sierpinski_ifs
from simplexlab.mollify import radial_kernel
from simplexlab.spectral import (I_lambda_estimate, I_lambda_slope, SpectrumGrid, assemble_J, fourier_transform,
                                 measure_spectrum, psi_hat_increment, radial_factor, spectral_identity_check,
                                 sphere_fourier)

TWO_ATOMS = PointMassMeasure(np.array([[-0.5, 0.0], [0.5, 0.0]]), np.array([0.5, 0.5]))
TRI3 = Simplex.equilateral_triangle(ambient_dim=3)


def test_single_atom_transform_is_one():
    xi = np.random.default_rng(0).normal(scale=5, size=(40, 3))
    assert np.allclose(fourier_transform(PointMassMeasure.single_atom([0, 0, 0.0]), xi), 1.0, atol=1e-15)


def test_two_atom_transform_is_cosine():
    xi = np.random.default_rng(1).normal(scale=3, size=(60, 2))
    assert np.allclose(fourier_transform(TWO_ATOMS, xi), np.cos(np.pi * xi[:, 0]), atol=1e-14)


@pytest.mark.parametrize("depth", [3, 6])
def test_cantor_transform_matches_product_formula(depth):
    mu = build_cantor_dust(middle_thirds_ifs(depth))
    x = np.linspace(-40, 40, 161)
    # atoms sit at cell centres with mean 1/2, and each level contributes a cosine factor
    oracle = np.exp(-1j * np.pi * x) * np.prod([np.cos(2 * np.pi * x / 3 ** (j + 1)) for j in range(depth)], axis=0)
    assert np.max(np.abs(fourier_transform(mu, x[:, None]) - oracle)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(1, 3), st.integers(0, 2**31))
def test_transform_bounds_and_hermitian_symmetry(n, k, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1, n)
    mu = PointMassMeasure(rng.uniform(-1, 1, (n, k)), w / w.sum())
    xi = rng.normal(scale=4, size=(30, k))
    f = fourier_transform(mu, xi)
    assert np.all(np.abs(f) <= 1 + 1e-12)
    assert np.allclose(fourier_transform(mu, -xi), np.conj(f), atol=1e-12)
    assert abs(fourier_transform(mu, np.zeros((1, k)))[0]) ** 2 == pytest.approx(1.0, abs=1e-10)


def test_spectrum_grid_layout(tmp_path):
    spec = measure_spectrum(TWO_ATOMS, 1.0, 0.25)
    assert spec.k == 2 and spec.spacing == pytest.approx(0.25) and spec.max_frequency == pytest.approx(1.0)
    assert spec.values.shape == (9, 9)
    assert spec.abs2[4, 4] == pytest.approx(1.0)
    assert np.allclose(spec.values, np.cos(np.pi * spec.axis)[:, None] * np.ones(9)[None, :], atol=1e-14)
    spec.to_csv(tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "xi0,xi1,re,im,abs2" and len(rows) == 82


def test_identity_single_atom():
    mu = PointMassMeasure.single_atom([0.0, 0.0])
    eps = 0.25
    check = spectral_identity_check(mu, eps)
    expect = radial_kernel(2).psi(0.0) * eps**-2
    assert check.measure_side == pytest.approx(expect, rel=1e-12)
    assert check.frequency_side == pytest.approx(expect, rel=1e-6)


def test_identity_two_atoms():
    check = spectral_identity_check(TWO_ATOMS, 0.25)
    assert check.relative_gap <= 0.01


def test_identity_cantor_dust_and_scaling():
    mu = build_cantor_dust(sierpinski_ifs(6))
    vals = []
    for eps in (2.0**-3, 2.0**-4, 2.0**-5):
        check = spectral_identity_check(mu, eps)
        assert check.relative_gap <= 0.01
        vals.append(check.measure_side)
    slope = np.polyfit(np.log([2.0**-3, 2.0**-4, 2.0**-5]), np.log(vals), 1)[0]
    assert slope == pytest.approx(math.log(3, 2) - 2, abs=0.2)


def test_identity_one_dimensional_cantor():
    assert spectral_identity_check(build_cantor_dust(middle_thirds_ifs(5)), 1 / 16).relative_gap <= 0.01


def test_identity_rejects_coarse_spacing():
    with pytest.raises(UnderResolvedError):
        spectral_identity_check(TWO_ATOMS, 0.25, spacing=0.5)


def test_sphere_fourier_at_zero_and_normal_directions():
    c = np.array([[0, 0, 0.0], [1, 0, 0]])
    sl = intersect_spheres(c, [1.0, 1.0])
    assert sphere_fourier(sl, np.zeros(3)) == pytest.approx(1.0)
    xi = np.array([0.3, 0, 0])
    val = sphere_fourier(sl, xi)
    assert abs(val) == pytest.approx(1.0, abs=1e-14)
    assert val == pytest.approx(np.exp(-2j * np.pi * sl.center @ xi), abs=1e-14)


def test_circle_transform_matches_direct_quadrature():
    sl = intersect_spheres(np.array([[0, 0, 0.0], [1, 0, 0]]), [1.0, 1.0])
    theta = 2 * np.pi * np.arange(512) / 512
    e1, e2 = sl.plane_basis
    pts = sl.center + sl.radius * (np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2)
    rng = np.random.default_rng(3)
    for xi in rng.normal(scale=1.5, size=(5, 3)):
        direct = np.mean(np.exp(-2j * np.pi * pts @ xi))
        assert sphere_fourier(sl, xi) == pytest.approx(direct, abs=1e-10)
    zero = np.array([0, 2.404825557695773 / (2 * np.pi * sl.radius), 0])
    assert abs(sphere_fourier(sl, zero)) <= 1e-3
    assert abs(np.mean(np.exp(-2j * np.pi * pts @ zero))) <= 1e-3


@pytest.mark.parametrize("p", [2, 3, 4])
def test_radial_factor_matches_bessel_closed_form(p):
    t = np.array([0.0, 0.5, 2.0, 7.3, 20.0])
    nu = (p - 1) / 2
    with np.errstate(invalid="ignore", divide="ignore"):
        closed = special.gamma(nu + 1) * (2 / t) ** nu * special.jv(nu, t)
    closed[0] = 1.0
    assert np.allclose(radial_factor(p, t), closed, atol=1e-9)


def test_radial_factor_low_dimensions():
    t = np.linspace(0, 10, 11)
    assert np.allclose(radial_factor(0, t), np.cos(t))
    assert np.allclose(radial_factor(1, t), special.j0(t))
    assert np.all(np.abs(radial_factor(2, t)) <= 1 + 1e-12)


def test_I_lambda_trivial_limits():
    zero = I_lambda_estimate(TRI3, 1.0, np.zeros((1, 3)), 2000, seed=1)[0]
    assert zero.value == 1.0
    tiny = I_lambda_estimate(TRI3, 1e-6, [[0, 0, 1.0]], 2000, seed=1)[0]
    assert tiny.value == pytest.approx(1.0, abs=1e-9)


def test_I_lambda_decay_and_monotone_trend():
    norms = 2.0 ** np.arange(7)
    ests = I_lambda_estimate(TRI3, 1.0, np.outer(norms, [0, 0, 1.0]), 100_000, seed=3)
    vals = np.array([e.value for e in ests])
    ses = np.array([e.std_error for e in ests])
    assert np.all((vals >= 0) & (vals <= 1))
    assert np.all(np.diff(vals) <= 3 * np.hypot(ses[1:], ses[:-1]))
    fit = I_lambda_slope(ests)
    assert fit.slope <= -0.8 and fit.bound_exponent == -1.0
    assert [e.epsilon for e in ests] == pytest.approx(norms)


def test_psi_hat_increment_is_order_sqrt_epsilon():
    ratios = [psi_hat_increment(2, e) / math.sqrt(e) for e in (2.0**-3, 2.0**-6, 2.0**-9)]
    assert all(0 <= r < 3 for r in ratios)


def test_assemble_J():
    mu = build_cantor_dust(sierpinski_ifs(3))
    spec = measure_spectrum(mu, 8.0, 0.25)
    flat = assemble_J(spec, 0.125, lambda xi: np.ones(len(xi)))
    kern = radial_kernel(2)
    r = np.linalg.norm(spec.nodes(), axis=1)
    manual = np.sum(spec.abs2.reshape(-1) * (kern.psi_hat(0.25 * r) - kern.psi_hat(0.125 * r)) ** 2) * 0.25**2
    assert flat == pytest.approx(manual, rel=1e-12)
    half = assemble_J(spec, 0.125, lambda xi: 0.5 * np.ones(len(xi)))
    assert half == pytest.approx(flat / 2, rel=1e-12) and flat > 0
