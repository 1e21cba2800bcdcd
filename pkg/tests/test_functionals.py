import numpy as np
import pytest

from extremal.functionals import (UnderResolvedError, aubin_JI, bergman_density, bergman_ratio, energy_E,
                                  entropy_S, functional_F, functional_L, gram_bound_margin, gram_matrix,
                                  mto_margin, omega_values, sphere_setup, torus_setup)
from extremal.solvers import random_band_limited
from extremal.surface import build_sphere, build_torus, ddc_values, integrate


@pytest.fixture(scope="module")
def s():
    return build_sphere(32, 64)


@pytest.fixture(scope="module")
def b3(s):
    return sphere_setup(s, 3)


def _psh(s, seed, V, amp=0.4):
    u = random_band_limited(s, seed, amp, 4)
    neg = -ddc_values(s, u).min()
    return u * min(1.0, 0.5 * V / neg) if neg > 0 else u


def test_energy_identities(s, b3):
    assert energy_E(b3, 1.7) == pytest.approx(1.7, abs=1e-14)
    u = _psh(s, 0, 3)
    J, I = aubin_JI(b3, u)
    # E = (1/V)(int u omega_ref - J) with omega_ref = V omega0
    assert energy_E(b3, u) - (3 * integrate(s, u) - J) / 3 == pytest.approx(0.0, abs=1e-12)
    assert I - 2 * J == pytest.approx(0.0, abs=1e-12)
    assert aubin_JI(b3, 2.0) == (0.0, 0.0)


def test_energy_refined_grid_oracle(b3):
    fine = build_sphere(96, 192)
    coarse = b3.surface
    a = np.zeros((coarse.mmax + 1, coarse.lmax + 1), dtype=complex)
    a[0, 2], a[1, 1], a[2, 3] = 0.3, 0.2 - 0.1j, 0.05j
    uc = coarse.synthesis(a)
    af = np.zeros((fine.mmax + 1, fine.lmax + 1), dtype=complex)
    af[: a.shape[0], : a.shape[1]] = a
    uf = fine.synthesis(af)
    assert energy_E(b3, uc) == pytest.approx(energy_E(sphere_setup(fine, 3), uf), abs=1e-12)


def test_L_shift_and_zero(s, b3):
    u = _psh(s, 1, 3)
    assert functional_L(b3, u + 0.8) == pytest.approx(functional_L(b3, u) + 0.8, abs=1e-12)
    assert abs(functional_L(b3, 0.0)) < 1e-12
    assert functional_F(b3, u + 0.8) == pytest.approx(functional_F(b3, u), abs=1e-12)


def test_L_two_by_two_quadrature_oracle():
    s = build_sphere(48, 96)
    b = sphere_setup(s, 3)  # m = 1
    u = 0.3 * s.xyz[2] + 0.2 * s.xyz[0]
    # four Gram entries by scipy dblquad
    G_ref = np.array([[0.92050189, -0.06753737], [-0.06753737, 1.12311399]])
    assert np.allclose(gram_matrix(b, u).real, G_ref, atol=1e-8)
    assert functional_L(b, u) == pytest.approx(-0.01442356956565584, abs=1e-12)


def test_gram_zonal_radial_oracle():
    s = build_sphere(48, 96)
    b = sphere_setup(s, 4)  # m = 2
    x = s.xyz[2]
    G = gram_matrix(b, 0.4 * x * x - 0.2 * x)
    # diagonal from 1-D quadrature in cos(theta); the azimuthal integral kills off-diagonal terms
    diag = [0.9443241217947982, 0.9297688528000516, 0.7855193779928019]
    assert np.allclose(np.diag(G).real, diag, atol=1e-12)
    assert np.max(np.abs(G - np.diag(np.diag(G)))) < 1e-13


def test_gram_identity_and_scaling(s):
    b = sphere_setup(s, 6)
    assert np.max(np.abs(gram_matrix(b, 0.0) - np.eye(5))) < 1e-12
    assert np.max(np.abs(gram_matrix(b, 0.7) - np.exp(-0.7) * np.eye(5))) < 1e-12


def test_F_nonpositive_on_fubini_study(s, b3):
    assert abs(functional_F(b3, 0.0)) < 1e-12
    for seed in range(10):
        u = _psh(s, seed, 3)
        assert omega_values(b3, u).min() > 0
        assert functional_F(b3, u) <= 1e-12


def test_torus_q_and_delta_deformations():
    s = build_torus(1j, 64)
    b = torus_setup(s)
    u = random_band_limited(s, 4, 0.5, 3)
    assert functional_F(b, u, q=1.0) == pytest.approx(functional_F(b, u), abs=1e-12)
    J, _ = aubin_JI(b, u)
    assert functional_F(b, u, delta=0.25) == pytest.approx(functional_F(b, u) - 0.25 * J, abs=1e-14)
    with pytest.raises(ValueError):
        functional_F(b, u, q=1.5)
    with pytest.raises(ValueError):
        functional_F(sphere_setup(build_sphere(16, 32), 2), 0.0, delta=0.1)


def test_torus_coercivity_with_half():
    s = build_torus(1j, 64)
    b = torus_setup(s)
    vals = {}
    for amp in (0.5, 1.0, 2.0, 4.0, 8.0):
        vals[amp] = []
        for seed in range(3):
            u = random_band_limited(s, seed, amp, 3)
            J, _ = aubin_JI(b, u)
            vals[amp].append(functional_F(b, u) + 0.5 * J)
    C = max(vals[0.5])
    assert all(v <= C for vs in vals.values() for v in vs)
    assert max(vals[8.0]) < max(vals[1.0])


def test_entropy(s, b3):
    assert abs(entropy_S(b3, 0.4)) < 1e-14
    for seed in range(5):
        assert entropy_S(b3, _psh(s, seed, 3)) > 0
    phi = s.xyz[2]
    quad = integrate(s, ddc_values(s, phi) ** 2)  # = 4/3
    for eps in (1e-2, 1e-3):
        series = eps ** 2 / (4 * 3 ** 2) * quad
        assert entropy_S(b3, eps * phi) == pytest.approx(series, rel=3 * eps)
    with pytest.raises(ValueError, match="node"):
        entropy_S(b3, 10 * s.xyz[2] ** 3)


def test_bergman_density_and_ratio(s, b3):
    assert abs(integrate(s, bergman_density(b3, _psh(s, 2, 3))) - 1) < 1e-12
    assert bergman_ratio(b3, 0.0) == pytest.approx(1.0, abs=1e-8)
    for seed in range(50):
        assert bergman_ratio(b3, _psh(s, seed, 3)) >= 1 - 1e-10
    fine = build_sphere(64, 128)

    def bump(t):
        return 0.2 * t.xyz[0] + 0.1 * t.xyz[2] ** 2
    assert bergman_ratio(b3, bump(s)) == pytest.approx(bergman_ratio(sphere_setup(fine, 3), bump(fine)), rel=1e-4)


def test_mto_and_gram_bound(s):
    b2 = sphere_setup(s, 2)
    for seed in range(10):
        u = random_band_limited(s, seed, 1.0, 4)
        assert mto_margin(b2, u) >= -1e-9
        assert gram_bound_margin(b2, u) >= -1e-9
    assert abs(mto_margin(b2, 0.3)) < 1e-12


def test_under_resolution_is_reported():
    s = build_sphere(8, 8)
    b = sphere_setup(s, 80)  # more sections than nodes
    with pytest.raises(UnderResolvedError):
        functional_L(b, 0.0)


def test_setup_validation():
    with pytest.raises(ValueError):
        sphere_setup(build_sphere(16, 32), 1)
    with pytest.raises(ValueError):
        sphere_setup(build_torus(1j, 32), 2)
    with pytest.raises(ValueError):
        torus_setup(build_sphere(16, 32))
