import numpy as np
import pytest

from extremal.surface import (Density, Potential, boost_matrix, build_sphere, build_torus, ddc, ddc_values,
                              dirichlet, green_function, integrate, inverse_ddc, mobius_pullback)


@pytest.fixture(scope="module")
def sphere():
    return build_sphere(32, 64)


@pytest.fixture(scope="module")
def torus():
    return build_torus(1j, 64)


def test_sphere_unit_area_and_odd_symmetry(sphere):
    assert integrate(sphere, 1.0) == pytest.approx(1.0, abs=1e-14)
    assert abs(integrate(sphere, np.cos(sphere.theta)[:, None] * np.ones(sphere.n_phi))) < 1e-15
    assert integrate(sphere, 0.0) == 0.0
    assert integrate(sphere, 2.5) == pytest.approx(2.5, abs=1e-14)


def test_sphere_quadrature_against_adaptive_oracle():
    s = build_sphere(64, 128)
    z2 = np.abs(s.z) ** 2
    # scipy dblquad at 1e-13 relative tolerance
    assert integrate(s, 1 / (1 + z2)) == pytest.approx(0.5, abs=1e-13)
    bump = np.exp(-z2) * (1 + 0.3 * s.xyz[0])
    assert integrate(s, bump) == pytest.approx(0.403652637676806, abs=1e-9)


def test_torus_quadrature(torus):
    assert integrate(torus, 1.0) == pytest.approx(1.0, abs=1e-14)
    f = np.exp(np.cos(2 * np.pi * torus.x1) + 0.5 * np.sin(2 * np.pi * torus.x2))
    # I0(1) I0(1/2), confirmed by dblquad
    assert integrate(torus, f) == pytest.approx(1.3464400072522782, abs=1e-13)
    F = np.fft.fft2(np.full(torus.shape, 3.0))
    assert np.count_nonzero(np.abs(F) > 1e-9) == 1 and abs(F[0, 0]) > 0


def test_torus_lattice_covers_fundamental_domain(torus):
    spacing = 1.0 / torus.n
    assert torus.n ** 2 * spacing ** 2 == pytest.approx(1.0)
    assert torus.x1.max() + spacing == pytest.approx(1.0)


def test_ddc_constants_stokes_and_spectrum(sphere):
    assert np.max(np.abs(ddc_values(sphere, 4.0))) < 1e-12
    u = np.cos(sphere.theta)[:, None] + 0.2 * sphere.xyz[0] ** 3
    assert abs(integrate(sphere, ddc(sphere, u))) < 1e-13
    Y1 = sphere.xyz[2]
    assert np.allclose(ddc_values(sphere, Y1), -2 * Y1, atol=1e-12)
    Y2 = 3 * sphere.xyz[2] ** 2 - 1
    assert np.allclose(ddc_values(sphere, Y2), -6 * Y2, atol=1e-11)


def test_ddc_matches_symbolic_laplacian(sphere):
    th, ph = np.meshgrid(sphere.theta, sphere.phi, indexing="ij")
    f = np.exp(np.cos(th)) * (1 + np.sin(th) * np.cos(ph))
    # Laplace-Beltrami of f, expanded with sympy
    lap = (np.sin(ph - 3 * th) / 8 + np.sin(ph - 2 * th) + 5 * np.sin(ph - th) / 8 - 5 * np.sin(ph + th) / 8
           - np.sin(ph + 2 * th) - np.sin(ph + 3 * th) / 8 - 2 * np.cos(th) - np.cos(2 * th) / 2 + 0.5) * np.exp(np.cos(th))
    assert np.max(np.abs(ddc_values(sphere, f) - lap)) < 1e-9


def test_torus_ddc_fourier_mode():
    tau = np.exp(1j * np.pi / 3)
    s = build_torus(tau, 64)
    k1, k2 = 1, 2
    f = np.cos(2 * np.pi * (k1 * s.x1 + k2 * s.x2))
    lam = -np.pi * tau.imag * (k1 ** 2 + ((k2 - k1 * tau.real) / tau.imag) ** 2)
    assert np.allclose(ddc_values(s, f), lam * f, atol=1e-10)


def test_dirichlet_form(sphere):
    rng = np.random.default_rng(1)
    u = sphere.synthesis(_random_coeffs(sphere, rng))
    v = sphere.synthesis(_random_coeffs(sphere, rng))
    assert abs(dirichlet(sphere, 3.0, v)) < 1e-12
    assert dirichlet(sphere, u, u) >= 0
    assert dirichlet(sphere, u, v) == pytest.approx(-integrate(sphere, u * ddc_values(sphere, v)), abs=1e-9)
    assert dirichlet(sphere, u, v) == pytest.approx(dirichlet(sphere, v, u), abs=1e-12)


def test_inverse_ddc_roundtrip(sphere, torus):
    from extremal.solvers import random_band_limited
    for s in (sphere, torus):
        f = random_band_limited(s, 3, 2.0, band=6) + 0.4
        v = inverse_ddc(s, f)
        assert abs(integrate(s, v)) < 1e-12
        assert np.max(np.abs(ddc_values(s, v) - (f - integrate(s, f)))) < 1e-8


def _random_coeffs(s, rng, band=5):
    a = np.zeros((s.mmax + 1, s.lmax + 1), dtype=complex)
    for m in range(band + 1):
        for l in range(max(m, 1), band + 1):
            a[m, l] = rng.normal() + (1j * rng.normal() if m else 0)
    return a


def test_fields_validate_shape(sphere):
    with pytest.raises(ValueError):
        Potential(sphere, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        Potential(sphere, np.full(sphere.shape, np.nan))
    d = Density(sphere, np.full(sphere.shape, 2.0))
    assert d.total_mass == pytest.approx(2.0)
    with pytest.raises(ValueError):
        integrate(build_sphere(16, 32), d)


def test_grid_validation():
    with pytest.raises(ValueError):
        build_sphere(4, 8)
    with pytest.raises(ValueError):
        build_torus(-1j, 32)
    with pytest.raises(ValueError):
        build_torus(1j, 33)


@pytest.mark.parametrize("tau", [1j, np.exp(1j * np.pi / 3)])
def test_green_function_pairing_and_mean(tau):
    from scipy import integrate as si

    s = build_torus(tau, 32)
    g = green_function(s, (0, 0))
    k1, k2 = 1, 2
    lam = -np.pi * tau.imag * (k1 ** 2 + ((k2 - k1 * tau.real) / tau.imag) ** 2)

    def at(x1, x2):
        return g.at(np.array(x1 + x2 * tau)).item()

    pair, _ = si.dblquad(lambda x2, x1: at(x1, x2) * lam * np.cos(2 * np.pi * (k1 * x1 + k2 * x2)),
                         0, 1, 0, 1, epsabs=1e-10, epsrel=1e-10)
    # phi(p) - int phi = 1 - 0
    assert pair == pytest.approx(1.0, abs=1e-6)
    mean, _ = si.dblquad(lambda x2, x1: at(x1, x2), 0, 1, 0, 1, epsabs=1e-10, epsrel=1e-10)
    assert abs(mean) < 1e-8


def test_green_function_log_singularity(torus):
    g = green_function(torus, (3, 5))
    rem = g.remainder.values
    assert np.all(np.isfinite(rem))
    # remainder continuous across p: compare with the value just off p
    for eps in (1e-3, 1e-5):
        z = g.p + eps * np.exp(0.7j)
        near = float(g.at(np.array(z))) - np.log(eps ** 2)
        assert near == pytest.approx(rem[3, 5], abs=10 * eps)
    assert np.isneginf(g.values()[3, 5])


def test_mobius_identity_and_composition():
    s = build_sphere(48, 96)
    u = Potential(s, 0.2 * s.xyz[0] + 0.1 * s.xyz[2] ** 2)
    v = mobius_pullback(s, u, np.eye(2), degree=2)
    assert np.max(np.abs(v.values - u.values)) < 1e-12
    F = boost_matrix([0.2, 0.1, 1.0], 0.4)
    G = boost_matrix([1.0, -0.3, 0.2], 0.3)
    zero = Potential(s, np.zeros(s.shape))
    two_step = mobius_pullback(s, mobius_pullback(s, zero, F, 2), G, 2)
    direct = mobius_pullback(s, zero, F @ G, 2)
    assert np.max(np.abs(two_step.values - direct.values)) < 1e-8


def test_mobius_pullback_keeps_curvature_positive():
    s = build_sphere(48, 96)
    v = mobius_pullback(s, 0.0, boost_matrix([0, 0, 1], 1.0), 2)
    rho = 2 + ddc_values(s, v.values)
    assert rho.min() > 0
    assert integrate(s, rho) == pytest.approx(2.0, abs=1e-12)
