"""Critical points of F on the sphere and mean-field equations on tori.

Sphere: (1/V) omega_u = beta_u, solved by the damped fixed point
u <- u + theta (ddc^-1 (V (beta_u - 1)) - u).

Torus: every mode reduces to
    ddc v = c (W exp(-v) / Z - 1),  Z = int W exp(-v),  int v = 0,
solved by Newton-GMRES preconditioned with the inverse of -ddc.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse.linalg as spla

from .bergman import R_op, gram
from .functionals import BundleSetup, UnderResolvedError, bergman_density, functional_F, omega_values
from .surface import (GreenFunction, Potential, Surface, _vals, ddc_values, green_function, integrate,
                      inverse_ddc, mobius_pullback)

log = logging.getLogger(__name__)


class SolverError(ArithmeticError):
    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = list(history)


@dataclass(eq=False)
class SolveReport:
    solution: Potential
    residual: float
    iterations: int
    converged: bool
    gauge: str = "mean-zero"
    history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    pairwise_max_distance: float | None = None

    def record(self) -> dict:
        out = {"residual": self.residual, "iterations": self.iterations, "converged": self.converged,
               "gauge": self.gauge}
        if self.pairwise_max_distance is not None:
            out["pairwise_max_distance"] = self.pairwise_max_distance
        for k, v in self.extra.items():
            if isinstance(v, (int, float, str, bool)) or v is None:
                out[k] = v
        return out


def _mean_zero(s: Surface, u: np.ndarray) -> np.ndarray:
    return u - integrate(s, u)


# ----------------------------------------------------------------------------
# Sphere
# ----------------------------------------------------------------------------

def critical_residual(b: BundleSetup, u) -> float:
    uv = _vals(b.surface, u)
    return float(np.max(np.abs(omega_values(b, uv) / b.V - bergman_density(b, uv))))


def _center_of_mass(b: BundleSetup, u) -> np.ndarray:
    s = b.surface
    om = omega_values(b, u)
    return np.einsum("ij,aij->a", s.weights * om, s.xyz) / b.V


def _boost_from_vector(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    r = np.linalg.norm(vec)
    if r == 0:
        return np.eye(2, dtype=complex)
    n = vec / r
    sig = n[2] * np.array([[1, 0], [0, -1]]) + n[0] * np.array([[0, 1], [1, 0]]) \
        + n[1] * np.array([[0, -1j], [1j, 0]])
    return np.cosh(r / 2) * np.eye(2) + np.sinh(r / 2) * sig


def mobius_normalize(b: BundleSetup, u) -> tuple[Potential, np.ndarray]:
    """Pull u back by the boost that moves the center of mass of omega_u to the origin."""
    s = b.surface
    pot = u if isinstance(u, Potential) else Potential(s, np.array(_vals(s, u), float))

    def f(vec):
        return _center_of_mass(b, mobius_pullback(s, pot, _boost_from_vector(vec), b.V))

    sol = scipy.optimize.root(f, np.zeros(3), method="hybr", options={"xtol": 1e-13})
    F = _boost_from_vector(sol.x)
    v = mobius_pullback(s, pot, F, b.V)
    return Potential(s, _mean_zero(s, v.values)), F


def solve_critical_sphere(b: BundleSetup, u_init=None, tol: float = 1e-10, max_iter: int = 2000,
                          newton: bool = True, normalize: bool = True) -> SolveReport:
    """Solve omega_u / V = beta_u on the sphere."""
    s = b.surface
    if s.kind != "sphere":
        raise ValueError("solve_critical_sphere needs a sphere setup")
    u = np.zeros(s.shape) if u_init is None else np.array(_vals(s, u_init), dtype=float)
    if np.min(omega_values(b, u)) < 0:
        raise ValueError("initial potential must have nonnegative curvature")
    u = _mean_zero(s, u)
    V = b.V

    def step(u):
        return inverse_ddc(s, V * (bergman_density(b, u) - 1.0))

    theta = 1.0
    hist = []
    res = critical_residual(b, u)
    hist.append(res)
    best = res
    stall = 0
    it = 0
    while res >= tol and it < max_iter:
        it += 1
        target = step(u)
        cand = None
        if newton and res < 1e-3:
            cand = _newton_sphere(b, u, target)
        if cand is None:
            cand = u + theta * (target - u)
        try:
            new_res = critical_residual(b, cand)
        except UnderResolvedError:
            new_res = np.inf
        if new_res > res and cand is not None and newton and res < 1e-3:
            cand = u + theta * (target - u)
            new_res = critical_residual(b, cand)
        if new_res > res:
            theta = max(theta / 2, 1 / 64)
        u, res = cand, new_res
        hist.append(res)
        if res < best:
            best, stall = res, 0
        else:
            stall += 1
        if stall >= 50 or not np.isfinite(res):
            raise SolverError(f"critical-point iteration diverged (residual {res:.3e})", hist)
    u = _mean_zero(s, u)
    report = SolveReport(Potential(s, u), res, it, res < tol, history=hist, extra={"theta": theta})
    if normalize:
        v, F = mobius_normalize(b, report.solution)
        report.extra["raw_solution"] = report.solution
        report.solution = v
        report.gauge = "mean-zero, Möbius center of mass"
        report.extra["mobius"] = F
        report.residual = critical_residual(b, v)
        report.converged = report.residual < tol
    report.extra["F"] = functional_F(b, report.solution)
    return report


def _newton_sphere(b: BundleSetup, u: np.ndarray, target: np.ndarray):
    """Newton step for u - T(u) = 0 with T(u) = ddc^-1 (V (beta_u - 1))."""
    s = b.surface
    g = gram(b, u)
    shape = s.shape

    def mv(v):
        v = v.reshape(shape)
        return (v - inverse_ddc(s, b.V * R_op(g, v).values)).ravel()

    n = u.size
    A = spla.LinearOperator((n, n), matvec=mv, dtype=float)
    rhs = (target - u).ravel()
    dv, info = spla.gmres(A, rhs, rtol=1e-12, atol=0.0, restart=60, maxiter=4)
    if not np.all(np.isfinite(dv)):
        return None
    return _mean_zero(s, u + dv.reshape(shape))


# ----------------------------------------------------------------------------
# Torus mean-field equations
# ----------------------------------------------------------------------------

def _neg_ddc_inverse(s: Surface, f: np.ndarray) -> np.ndarray:
    return -inverse_ddc(s, f)


def mean_field_residual(s: Surface, W: np.ndarray, c: float, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    e = W * np.exp(-(v - v.max()))
    beta = e / integrate(s, e)
    return -ddc_values(s, v) + c * (beta - 1.0), beta


def solve_liouville(s: Surface, W: np.ndarray, c: float, v0=None, tol: float = 1e-10,
                    max_iter: int = 60) -> SolveReport:
    """Newton-GMRES for ddc v = c (W exp(-v)/Z - 1) with int v = 0."""
    v = np.zeros(s.shape) if v0 is None else _mean_zero(s, np.array(_vals(s, v0), dtype=float))
    r, beta = mean_field_residual(s, W, c, v)
    res = float(np.max(np.abs(r)))
    hist = [res]
    n = v.size
    it = 0
    while res >= tol and it < max_iter:
        it += 1
        b_ = beta

        def mv(x, b_=b_):
            x = x.reshape(s.shape)
            y = x - _neg_ddc_inverse(s, c * b_ * (x - integrate(s, x * b_)))
            return y.ravel()

        A = spla.LinearOperator((n, n), matvec=mv, dtype=float)
        rhs = -_neg_ddc_inverse(s, r).ravel()
        dv, _ = spla.gmres(A, rhs, rtol=1e-13, atol=0.0, restart=80, maxiter=5)
        dv = _mean_zero(s, dv.reshape(s.shape))
        t = 1.0
        while True:
            cand = v + t * dv
            rc, bc = mean_field_residual(s, W, c, cand)
            rn = float(np.max(np.abs(rc)))
            if rn < (1 - 1e-4 * t) * res or t <= 1 / 256:
                break
            t /= 2
        if not np.isfinite(rn):
            raise SolverError("mean-field Newton produced non-finite values", hist)
        v, r, beta, res = cand, rc, bc, rn
        hist.append(res)
        if len(hist) > 12 and hist[-1] > 0.999 * hist[-11]:
            raise SolverError(f"mean-field Newton stalled (residual {res:.3e})", hist)
    return SolveReport(Potential(s, v), res, it, res < tol, history=hist, extra={"c": c})


def _mode_data(g: GreenFunction, eta: float, mode: str):
    t = eta / (4 * np.pi)
    if mode == "i":
        return g.weight(1.0), t, 1.0
    if mode == "q":
        if not 0 < t < 1:
            raise ValueError(f"mode q needs 0 < eta/4pi < 1, got {t}")
        return g.weight(t), t, t
    if mode == "ii":
        return g.weight(t), t, 1.0
    raise ValueError(f"unknown mean-field mode {mode!r}")


def solve_mean_field(s: Surface, p=(0, 0), eta: float = 4 * np.pi, mode: str = "i", u_init=None,
                     tol: float = 1e-10, green: GreenFunction | None = None) -> SolveReport:
    """Mean-field equations with one vortex at p.

    mode i:  Delta u = eta (exp(g_p - u) - 1) with Delta = 4 pi ddc, int exp(g_p - u) = 1
    mode q:  omega0 + ddc u = exp(q (g_p - u)) omega0 with q = eta / 4 pi
    mode ii: w = t g_p - v, t = eta / 4 pi, where ddc v = t (exp(t g_p - v)/Z - 1);
             w has curvature t exp(w)/Z and a cone point at p, and w = g_p - u at t = 1.

    The stored solution is mean-zero; ``extra['normalized']`` carries the
    representative with unit mean-field mass.
    """
    if s.kind != "torus":
        raise ValueError("solve_mean_field needs a torus surface")
    if not 0 < eta <= 8 * np.pi:
        raise ValueError(f"eta must lie in (0, 8 pi], got {eta}")
    g = green if green is not None else green_function(s, p)
    W, c, scale = _mode_data(g, eta, mode)
    v0 = None if u_init is None else scale * np.array(_vals(s, u_init), dtype=float)
    rep = solve_liouville(s, W, c, v0, tol=tol)
    v = rep.solution.values
    e = W * np.exp(-v)
    Z = integrate(s, e)
    if mode == "i":
        u = v
        normalized = u + np.log(Z)
        mass = integrate(s, W * np.exp(-normalized))
    elif mode == "q":
        u = v / scale
        normalized = u + np.log(Z) / scale
        mass = integrate(s, g.weight(scale) * np.exp(-scale * normalized))
    else:
        u = v
        normalized = v + np.log(Z)
        with np.errstate(divide="ignore"):
            rep.extra["w"] = c * g.values() - normalized
        mass = integrate(s, W * np.exp(-normalized))
    rep.solution = Potential(s, _mean_zero(s, u))
    rep.extra.update({"eta": eta, "mode": mode, "scaled_solution": v, "normalized": Potential(s, normalized),
                      "mass": mass, "log_Z": float(np.log(Z)), "green": g, "W": W})
    return rep


def conical_residual(rep: SolveReport) -> float:
    """max |ddc w + t exp(w)| away from the vortex for a mode-ii solution (t = eta / 4 pi).

    Uses ddc g_p = -1 off p, so ddc w = -t - ddc v.
    """
    if rep.extra.get("mode") != "ii":
        raise ValueError("conical_residual needs a mode ii report")
    s = rep.solution.surface
    t = rep.extra["eta"] / (4 * np.pi)
    w = rep.extra["w"]
    v = rep.extra["normalized"].values
    lhs = -t - ddc_values(s, v) + t * np.exp(w)
    mask = np.isfinite(w)
    return float(np.max(np.abs(lhs[mask])))


def random_band_limited(s: Surface, seed: int, amplitude: float = 1.0, band: int = 4) -> np.ndarray:
    """Seeded smooth random field with modes up to `band`, scaled to max |u| = amplitude."""
    rng = np.random.default_rng(seed)
    if s.kind == "sphere":
        a = np.zeros((s.mmax + 1, s.lmax + 1), dtype=complex)
        for m in range(band + 1):
            for l in range(max(m, 1), band + 1):
                a[m, l] = rng.normal() + (1j * rng.normal() if m else 0.0)
        f = s.synthesis(a)
    else:
        F = np.zeros(s.shape, dtype=complex)
        for k1 in range(-band, band + 1):
            for k2 in range(-band, band + 1):
                if (k1, k2) != (0, 0) and k1 * k1 + k2 * k2 <= band * band:
                    F[k1 % s.n, k2 % s.n] = rng.normal() + 1j * rng.normal()
        f = np.fft.ifft2(F).real
    f = f - integrate(s, f)
    return amplitude * f / max(np.max(np.abs(f)), 1e-300)


def multistart(s: Surface, p=(0, 0), eta: float = np.pi, n_starts: int = 20, seed: int = 0,
               amplitude: float = 2.0, tol: float = 1e-10, mode: str = "i") -> SolveReport:
    """Solve from seeded random starts; report the spread of the gauge-fixed solutions."""
    g = green_function(s, p)
    sols, reps = [], []
    for k in range(n_starts):
        u0 = random_band_limited(s, seed + k, amplitude)
        rep = solve_mean_field(s, p, eta, mode, u0, tol=tol, green=g)
        reps.append(rep)
        sols.append(rep.solution.values)
    dist = 0.0
    for i in range(len(sols)):
        for j in range(i + 1, len(sols)):
            dist = max(dist, float(np.max(np.abs(sols[i] - sols[j]))))
    best = reps[0]
    best.pairwise_max_distance = dist
    best.extra["n_starts"] = n_starts
    best.extra["all_converged"] = all(r.converged for r in reps)
    best.extra["max_residual"] = max(r.residual for r in reps)
    best.extra["max_iterations"] = max(r.iterations for r in reps)
    return best


# ----------------------------------------------------------------------------
# Linearization
# ----------------------------------------------------------------------------

def _sphere_basis(s, lmax: int) -> np.ndarray:
    funcs = []
    for l in range(1, lmax + 1):
        for m in range(0, l + 1):
            for part in ((1.0,) if m == 0 else (1.0, 1j)):
                a = np.zeros((s.mmax + 1, s.lmax + 1), dtype=complex)
                a[m, l] = part
                funcs.append(s.synthesis(a))
    return np.array(funcs)


def linearization_min_eig(b_or_rep, u=None, n_eigs: int = 4, lmax: int = 8, tol: float = 1e-8) -> list[float]:
    """Smallest eigenvalues of the linearized critical-point operator on mean-zero functions.

    Sphere: v -> -ddc v / V + R[v] (Galerkin in spherical harmonics of degree <= lmax).
    Torus (pass a mean-field SolveReport): v -> -ddc v - c beta (v - int v beta) (LOBPCG).
    Both are nonnegative at a nondegenerate maximum of F.
    """
    if isinstance(b_or_rep, SolveReport):
        return _torus_min_eig(b_or_rep, n_eigs, tol)
    b = b_or_rep
    s = b.surface
    if s.kind != "sphere":
        raise ValueError("pass a mean-field SolveReport for torus spectra")
    g = gram(b, u if u is not None else 0.0)
    B = _sphere_basis(s, min(lmax, s.lmax))
    w = s.weights
    KB = np.array([-ddc_values(s, f) / b.V + R_op(g, f).values for f in B])
    Mm = np.einsum("aij,bij,ij->ab", B, B, w)
    Km = np.einsum("aij,bij,ij->ab", B, KB, w)
    Km = 0.5 * (Km + Km.T)
    ev = scipy.linalg.eigh(Km, Mm, eigvals_only=True)
    return [float(x) for x in ev[:n_eigs]]


def _torus_min_eig(rep: SolveReport, n_eigs: int, tol: float) -> list[float]:
    s = rep.solution.surface
    W = rep.extra["W"]
    c = rep.extra["c"]
    v = rep.extra.get("scaled_solution")
    if v is None:
        mode = rep.extra["mode"]
        scale = rep.extra["eta"] / (4 * np.pi) if mode == "q" else 1.0
        v = scale * rep.solution.values
    _, beta = mean_field_residual(s, W, c, v)
    n = v.size

    def op(X):
        X = np.asarray(X).reshape(n, -1)
        out = np.empty_like(X)
        for k in range(X.shape[1]):
            x = X[:, k].reshape(s.shape)
            out[:, k] = (-ddc_values(s, x) - c * beta * (x - integrate(s, x * beta))).ravel()
        return out

    def prec(X):
        X = np.asarray(X).reshape(n, -1)
        out = np.empty_like(X)
        for k in range(X.shape[1]):
            out[:, k] = _neg_ddc_inverse(s, X[:, k].reshape(s.shape)).ravel()
        return out

    A = spla.LinearOperator((n, n), matvec=op, matmat=op, dtype=float)
    M = spla.LinearOperator((n, n), matvec=prec, matmat=prec, dtype=float)
    rng = np.random.default_rng(0)
    X = rng.normal(size=(n, max(n_eigs, 1) + 4))  # wide block: lowest modes come in symmetric pairs
    Y = np.ones((n, 1))
    vals, _ = spla.lobpcg(A, X, M=M, Y=Y, largest=False, tol=tol, maxiter=500)
    return [float(x) for x in np.sort(vals)[:n_eigs]]


# ----------------------------------------------------------------------------
# Continuation
# ----------------------------------------------------------------------------

def continuation_in_eta(s: Surface, p=(0, 0), eta_grid=(np.pi, 2 * np.pi, 4 * np.pi), tol: float = 1e-10,
                        mode: str = "i", with_eigs: bool = True, halt_on_failure: bool = True) -> list[SolveReport]:
    """Secant predictor and Newton corrector along an increasing grid of eta."""
    eta_grid = [float(e) for e in eta_grid]
    if any(e <= 0 or e >= 8 * np.pi for e in eta_grid):
        raise ValueError("eta grid must lie in (0, 8 pi)")
    if any(b < a for a, b in zip(eta_grid, eta_grid[1:])):
        raise ValueError("eta grid must be nondecreasing")
    g = green_function(s, p)
    reports = []
    prev = []  # (eta, solution values)
    for eta in eta_grid:
        if len(prev) >= 2 and prev[-1][0] != prev[-2][0]:
            (e0, u0), (e1, u1) = prev[-2], prev[-1]
            guess = u1 + (eta - e1) / (e1 - e0) * (u1 - u0)
        elif prev:
            guess = prev[-1][1]
        else:
            guess = None
        try:
            rep = solve_mean_field(s, p, eta, mode, guess, tol=tol, green=g)
        except SolverError as exc:
            rep = SolveReport(Potential(s, np.zeros(s.shape)), np.nan, 0, False, history=exc.history,
                              extra={"eta": eta, "mode": mode, "error": str(exc)})
        if rep.converged and with_eigs:
            rep.extra["min_eig"] = linearization_min_eig(rep, n_eigs=1)[0]
        reports.append(rep)
        if not rep.converged or rep.extra.get("min_eig", 1.0) <= 0:
            rep.extra["halted"] = True
            if halt_on_failure:
                break
            continue
        prev.append((eta, rep.solution.values))
    return reports
