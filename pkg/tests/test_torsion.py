import numpy as np
import pytest

from extremal.functionals import aubin_JI, functional_F, mto_margin, sphere_setup, torus_setup
from extremal.solvers import random_band_limited
from extremal.surface import Potential, build_sphere, build_torus, ddc_values
from extremal.torsion import entropy_ladder, fang_check, relative_torsion


@pytest.fixture(scope="module")
def s():
    return build_sphere(32, 64)


def _zonal(s, seed, amp=0.3):
    rng = np.random.default_rng(seed)
    a = np.zeros((s.mmax + 1, s.lmax + 1), dtype=complex)
    a[0, 1:5] = rng.normal(size=4)
    u = s.synthesis(a)
    return amp * u / np.abs(u).max()


def test_torus_torsion_is_F():
    t = build_torus(np.exp(1j * np.pi / 3), 64)
    b = torus_setup(t)
    u = random_band_limited(t, 1, 0.7, 3)
    rec = relative_torsion(b, u)
    assert rec.j_coefficient == 0 and rec.N == 1
    assert rec.relative_torsion == pytest.approx(functional_F(b, u), abs=1e-14)


def test_sphere_torsion_components(s):
    for m in range(5):
        b = sphere_setup(s, m + 2)
        u = random_band_limited(s, m, 0.5, 4)
        rec = relative_torsion(b, u, "r")
        assert rec.j_coefficient == pytest.approx(-1 / (m + 2), abs=1e-15)
        assert rec.N == m + 1
        assert rec.J == pytest.approx(aubin_JI(b, u)[0], abs=1e-14)
        assert abs(rec.recompute() - rec.relative_torsion) < 1e-12
        assert set(rec.as_dict()) >= {"j_term", "nf_term", "setup_id", "u_id"}


def test_fang_bound(s):
    assert np.max(np.abs(fang_check(2, Potential(s, np.zeros(s.shape))))) < 1e-14
    for seed in range(5):
        lhs, rhs, margin = fang_check(3, Potential(s, _zonal(s, seed)))
        assert margin > 0 and margin == pytest.approx(rhs - lhs, abs=1e-15)
    u = random_band_limited(s, 7, 1.0, 4)
    assert fang_check(0, Potential(s, u))[2] == pytest.approx(mto_margin(sphere_setup(s, 2), u), abs=1e-12)
    with pytest.raises(ValueError):
        fang_check(-1, Potential(s, u))
    with pytest.raises(ValueError):
        fang_check(1, u)


def test_entropy_ladder(s):
    b = sphere_setup(s, 3)
    flat = entropy_ladder(b, 0.4, k_list=(1, 2, 4))
    assert all(abs(r["torsion"]) < 1e-12 for r in flat["rows"])
    u = 0.1 * s.xyz[2] + 0.05 * s.xyz[0] ** 2
    assert (3 + ddc_values(s, u)).min() > 0
    out = entropy_ladder(b, u)
    gaps = [r["gap"] for r in out["rows"] if r["k"] >= 4]
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))
    assert out["gap"] < 1e-2
    with pytest.raises(ValueError):
        entropy_ladder(b, u, k_list=(2, 1))
    with pytest.raises(ValueError):
        entropy_ladder(torus_setup(build_torus(1j, 32)), 0.0)
