import numpy as np
import pytest

from extremal.functionals import functional_F, sphere_setup, torus_setup
from extremal.solvers import (SolverError, conical_residual, continuation_in_eta, critical_residual,
                              linearization_min_eig, multistart, random_band_limited, solve_critical_sphere,
                              solve_mean_field)
from extremal.surface import build_sphere, build_torus, ddc_values, integrate


@pytest.fixture(scope="module")
def s():
    return build_sphere(32, 64)


@pytest.fixture(scope="module")
def b3(s):
    return sphere_setup(s, 3)


@pytest.fixture(scope="module")
def t64():
    return build_torus(1j, 64)


def _psh(s, seed, V, amp=0.1):
    u = random_band_limited(s, seed, amp, 4)
    neg = -ddc_values(s, u).min()
    return u * min(1.0, 0.5 * V / neg) if neg > 0 else u


# ----------------------------------------------------------------------------
# sphere
# ----------------------------------------------------------------------------

def test_fubini_study_is_already_critical(b3):
    rep = solve_critical_sphere(b3)
    assert rep.converged and rep.iterations == 0
    assert np.max(np.abs(rep.solution.values)) < 1e-12


def test_random_starts_reach_fubini_study(s, b3):
    for seed in range(3):
        rep = solve_critical_sphere(b3, _psh(s, seed, 3))
        assert rep.converged and rep.residual < 1e-8
        assert abs(rep.extra["F"]) < 1e-6
        assert abs(critical_residual(b3, rep.solution)) < 1e-8


def test_zonal_bump_start(s, b3):
    u0 = ((1 + s.xyz[2]) / 2) ** 2
    rep = solve_critical_sphere(b3, u0)
    assert rep.converged
    assert np.max(np.abs(rep.solution.values)) < 1e-6


def test_sphere_linearization_spectrum(b3):
    ev = linearization_min_eig(b3, 0.0, n_eigs=4)
    V = b3.V
    assert np.max(np.abs(ev[:3])) < 1e-8
    assert ev[3] == pytest.approx(12 / (V * (V + 1)), abs=1e-8)


def test_sphere_solver_reports_nonconvergence(s, b3):
    rep = solve_critical_sphere(b3, _psh(s, 1, 3, 0.3), max_iter=1, newton=False, normalize=False)
    assert not rep.converged and rep.iterations == 1
    with pytest.raises(ValueError):
        solve_critical_sphere(b3, 40 * s.xyz[2] ** 3)
    with pytest.raises(ValueError):
        solve_critical_sphere(torus_setup(build_torus(1j, 32)))


def test_solver_error_is_arithmetic():
    err = SolverError("x", [1.0, 2.0])
    assert isinstance(err, ArithmeticError) and err.history == [1.0, 2.0]


# ----------------------------------------------------------------------------
# torus mean field
# ----------------------------------------------------------------------------

def test_mean_field_solution(t64):
    rep = solve_mean_field(t64, (0, 0), 2 * np.pi, "i", random_band_limited(t64, 3, 2.0))
    assert rep.converged and rep.residual < 1e-10
    assert rep.extra["mass"] == pytest.approx(1.0, abs=1e-12)
    assert abs(integrate(t64, rep.solution.values)) < 1e-13


def test_multistart_collapses(t64):
    rep = multistart(t64, (0, 0), np.pi, 5, 0)
    assert rep.extra["all_converged"]
    assert rep.pairwise_max_distance < 1e-8


def test_modes_i_and_ii_agree_at_4pi(t64):
    r1 = solve_mean_field(t64, (0, 0), 4 * np.pi, "i")
    r2 = solve_mean_field(t64, (0, 0), 4 * np.pi, "ii")
    assert np.max(np.abs(r1.solution.values - r2.solution.values)) < 1e-8
    assert conical_residual(r2) < 1e-8
    with pytest.raises(ValueError):
        conical_residual(r1)


def test_mode_q(t64):
    rq = solve_mean_field(t64, (0, 0), 2 * np.pi, "q")
    assert rq.converged and rq.extra["mass"] == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        solve_mean_field(t64, (0, 0), 4 * np.pi, "q")


def test_torus_linearization_is_positive(t64):
    r4 = solve_mean_field(t64, (0, 0), 4 * np.pi, "i")
    r1 = solve_mean_field(t64, (0, 0), np.pi, "i")
    e4 = linearization_min_eig(r4, n_eigs=1)[0]
    e1 = linearization_min_eig(r1, n_eigs=1)[0]
    assert e4 > 0 and e1 > e4


def test_critical_point_maximizes_F(t64):
    b = torus_setup(t64)
    rep = solve_mean_field(t64, (0, 0), 4 * np.pi, "i")
    F0 = functional_F(b, rep.solution)
    for seed in range(3):
        assert functional_F(b, rep.solution.values + 0.05 * random_band_limited(t64, 40 + seed)) < F0


def test_zero_continuation_step_is_a_no_op(t64):
    reps = continuation_in_eta(t64, (0, 0), [2 * np.pi, 2 * np.pi], with_eigs=False)
    assert len(reps) == 2 and all(r.converged for r in reps)
    assert np.max(np.abs(reps[0].solution.values - reps[1].solution.values)) < 1e-10


def test_mean_field_validation(t64, s):
    with pytest.raises(ValueError):
        solve_mean_field(t64, (0, 0), 9 * np.pi)
    with pytest.raises(ValueError):
        solve_mean_field(t64, (0, 0), 0.0)
    with pytest.raises(ValueError):
        solve_mean_field(s, (0, 0), np.pi)
    with pytest.raises(ValueError):
        solve_mean_field(t64, (0, 0), np.pi, "bogus")
    with pytest.raises(ValueError):
        continuation_in_eta(t64, (0, 0), [2 * np.pi, np.pi])
