"""psh envelopes, geodesics between metrics and diagnostics along paths.

The projection P onto omega-psh functions is solved as a discrete obstacle
problem.  With w = u - Pu the nodewise conditions are

    w >= 0,   M w + r >= 0,   w (M w + r) = 0,

where M = diag(area) (-lap_h) is a symmetric M-matrix and r = area (V + lap_h u).
Projected SOR gives a warm start and a primal-dual active set loop with
sparse direct solves finishes the job.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial import legendre as npleg
from scipy.interpolate import CubicSpline

from . import kernels
from .functionals import BundleSetup, aubin_JI, energy_E, functional_L
from .surface import Potential, Sphere, Surface, _vals, ddc_values, energy_density, gradient, integrate

log = logging.getLogger(__name__)


class ProjectionError(ArithmeticError):
    def __init__(self, msg, residual=np.nan):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


class InfeasibleBendError(ValueError):
    def __init__(self, A, min_A):
        super().__init__(f"bend A={A:.6g} fails the curvature test; need A >= {min_A:.6g}")
        self.min_A = min_A


# ----------------------------------------------------------------------------
# Discrete Laplacians
# ----------------------------------------------------------------------------

def _sphere_stiffness(s: Sphere) -> sp.csr_matrix:
    nt, nph = s.shape
    x, wg = s.x, s.gl_weights
    faces = 1.0 - np.concatenate([[0.0], np.cumsum(wg)])
    faces[-1] = -1.0
    cx = (1.0 - faces[1:-1] ** 2) / (x[:-1] - x[1:]) / (2 * nph)
    dphi = 2 * np.pi / nph
    cphi = wg / (2 * nph * (1 - x * x) * dphi ** 2)
    idx = np.arange(nt * nph).reshape(nt, nph)
    rows, cols, vals = [], [], []
    # theta couplings
    a, b = idx[:-1].ravel(), idx[1:].ravel()
    c = np.repeat(cx, nph)
    rows += [a, b]
    cols += [b, a]
    vals += [-c, -c]
    # phi couplings
    a, b = idx.ravel(), np.roll(idx, -1, axis=1).ravel()
    c = np.repeat(cphi, nph)
    rows += [a, b]
    cols += [b, a]
    vals += [-c, -c]
    off = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(nt * nph,) * 2)
    return (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()


def _torus_stiffness(s: Surface) -> sp.csr_matrix:
    n = s.n
    a, bi = s.tau.real, s.tau.imag
    A11 = abs(s.tau) ** 2 / (4 * np.pi * bi)
    A12 = -a / (4 * np.pi * bi)
    A22 = 1.0 / (4 * np.pi * bi)
    if A11 < abs(A12) or A22 < abs(A12):
        raise ValueError("tau must be reduced for a monotone stencil")
    h2 = n * n  # 1/h^2
    area = 1.0 / (n * n)
    sgn = 1 if A12 >= 0 else -1
    idx = np.arange(n * n).reshape(n, n)
    rows, cols, vals = [], [], []
    for shift, coef in (((1, 0), A11 - abs(A12)), ((0, 1), A22 - abs(A12)), ((1, sgn), abs(A12))):
        if coef == 0:
            continue
        nb = np.roll(np.roll(idx, -shift[0], axis=0), -shift[1], axis=1).ravel()
        c = np.full(n * n, coef * h2 * area)
        rows += [idx.ravel(), nb]
        cols += [nb, idx.ravel()]
        vals += [-c, -c]
    off = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n * n,) * 2)
    off.sum_duplicates()
    return (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()


_STIFF_CACHE: dict = {}


def stiffness(s: Surface) -> sp.csr_matrix:
    """Symmetric M = diag(area) (-lap_h), positive semidefinite with constants in the kernel."""
    if s.key not in _STIFF_CACHE:
        _STIFF_CACHE[s.key] = _sphere_stiffness(s) if s.kind == "sphere" else _torus_stiffness(s)
    return _STIFF_CACHE[s.key]


def laplacian_h(s: Surface, u) -> np.ndarray:
    """Finite-volume approximation of dd^c u (monotone stencil)."""
    f = _vals(s, u)
    return -(stiffness(s) @ f.ravel()).reshape(s.shape) / s.weights


def omega_h(b: BundleSetup, u) -> np.ndarray:
    return b.V + laplacian_h(b.surface, u)


def energy_E_h(b: BundleSetup, u) -> float:
    """E with the discrete Laplacian; its gradient is exactly omega_h / V."""
    s = b.surface
    f = _vals(s, u)
    return integrate(s, f) - float(f.ravel() @ (stiffness(s) @ f.ravel())) / (2 * b.V)


def functional_F_h(b: BundleSetup, u) -> float:
    return energy_E_h(b, u) - functional_L(b, u)


# ----------------------------------------------------------------------------
# Obstacle problem
# ----------------------------------------------------------------------------

def _natural_residual(w, lam, d) -> float:
    return float(np.max(np.abs(np.minimum(w, lam / d)))) if len(w) else 0.0


def _pgs(M: sp.csr_matrix, r: np.ndarray, w: np.ndarray, omega: float, n_sweeps: int) -> float:
    return kernels.pgs_sweeps(w, r, M.indptr.astype(np.int64), M.indices.astype(np.int64),
                              M.data, M.diagonal().copy(), omega, n_sweeps)


def solve_obstacle(M: sp.csr_matrix, r: np.ndarray, w0=None, tol: float = 1e-9, method: str = "pdas",
                   pgs_sweeps: int = 20, omega: float = 1.5, max_iter: int = 200):
    """Least w >= 0 with M w + r >= 0 and complementarity.  Returns (w, info)."""
    n = len(r)
    d = M.diagonal()
    w = np.zeros(n) if w0 is None else np.maximum(np.asarray(w0, dtype=float).copy(), 0)
    info = {"method": method, "sweeps": 0, "pdas_iterations": 0}
    if method == "pgs":
        chunk = 50
        while info["sweeps"] < max_iter * chunk:
            _pgs(M, r, w, omega, chunk)
            info["sweeps"] += chunk
            res = _natural_residual(w, M @ w + r, d)
            if res < tol:
                info["residual"] = res
                return w, info
        raise ProjectionError("projected SOR did not converge", res)
    if method != "pdas":
        raise ValueError(f"unknown obstacle method {method!r}")
    if pgs_sweeps:
        _pgs(M, r, w, omega, pgs_sweeps)
        info["sweeps"] = pgs_sweeps
    lam = M @ w + r
    active = (w - lam / d) <= 0
    Mc = M.tocsc()
    seen = set()
    for it in range(max_iter):
        if not active.any():
            # the envelope always touches the obstacle; pin the most constrained node
            active[np.argmax(lam / d - w)] = True
        inactive = ~active
        w = np.zeros(n)
        if inactive.any():
            w[inactive] = spla.spsolve(Mc[inactive][:, inactive], -r[inactive])
        lam = M @ w + r
        new = (w - lam / d) <= 0
        info["pdas_iterations"] = it + 1
        if np.array_equal(new, active):
            break
        key = new.tobytes()
        if key in seen:
            # cycling: fall back to a few relaxation sweeps before retrying
            w = np.maximum(w, 0)
            _pgs(M, r, w, 1.0, 50)
            info["sweeps"] += 50
            lam = M @ w + r
            new = (w - lam / d) <= 0
        seen.add(key)
        active = new
    res = _natural_residual(w, lam, d)
    info["residual"] = res
    if res >= tol:
        raise ProjectionError("active-set iteration did not converge", res)
    return w, info


def project_psh(b: BundleSetup, u, tol: float = 1e-9, method: str = "pdas", w0=None,
                return_info: bool = False):
    """Largest v <= u with V + lap_h v >= 0 at every node."""
    s = b.surface
    uv = _vals(s, u)
    if not np.all(np.isfinite(uv)):
        raise ValueError("u must be finite")
    M = stiffness(s)
    r = (s.weights * b.V).ravel() - M @ uv.ravel()
    w, info = solve_obstacle(M, r, w0=w0, tol=tol, method=method)
    v = Potential(s, uv - w.reshape(s.shape))
    return (v, info) if return_info else v


# ----------------------------------------------------------------------------
# Paths
# ----------------------------------------------------------------------------

@dataclass(eq=False)
class MetricPath:
    times: np.ndarray
    potentials: list
    method: str = ""
    is_subgeodesic: bool = False
    is_geodesic: bool = False
    diagnostics: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.potentials):
            raise ValueError("one potential per time sample")
        if len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing with at least two samples")

    @property
    def surface(self) -> Surface:
        return self.potentials[0].surface

    def values(self) -> np.ndarray:
        return np.array([p.values for p in self.potentials])

    def endpoint_error(self, u0, u1) -> float:
        s = self.surface
        return max(float(np.max(np.abs(self.potentials[0].values - _vals(s, u0)))),
                   float(np.max(np.abs(self.potentials[-1].values - _vals(s, u1)))))


def _time_grid(K) -> np.ndarray:
    if np.isscalar(K):
        if int(K) < 2:
            raise ValueError("need at least two time samples")
        return np.linspace(0.0, 1.0, int(K))
    t = np.asarray(K, dtype=float)
    if t[0] != 0.0 or t[-1] != 1.0:
        raise ValueError("time samples must start at 0 and end at 1")
    return t


def is_zonal(s: Surface, u, tol: float = 1e-10) -> bool:
    if s.kind != "sphere":
        return False
    a = u.spectral() if isinstance(u, Potential) else s.analysis(_vals(s, u))
    return float(np.max(np.abs(a[1:]), initial=0.0)) <= tol * max(float(np.max(np.abs(a))), 1.0)


def _zonal_series(s: Sphere, u) -> np.ndarray:
    """Coefficients in the ordinary Legendre basis P_l(x)."""
    a = u.spectral() if isinstance(u, Potential) else s.analysis(_vals(s, u))
    ell = np.arange(a.shape[1])
    return a[0].real * np.sqrt(2 * ell + 1.0)


def _safe_newton(fun, lo, hi, x, iters: int = 100, tol: float = 1e-14):
    """Vectorized Newton for an increasing function, kept inside a shrinking bracket."""
    lo, hi, x = lo.copy(), hi.copy(), x.copy()
    active = np.ones(x.shape, dtype=bool)
    for _ in range(iters):
        f, df = fun(x)
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - f / df
        bad = ~np.isfinite(xn) | (xn < lo) | (xn > hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        xn = np.where(active & (f != 0), xn, x)
        active = np.abs(xn - x) > tol * np.maximum(1.0, np.abs(x))
        x = xn
        if not active.any():
            break
    return x


def _legendre_geodesic(b: BundleSetup, u0, u1, times):
    s = b.surface
    V = b.V
    series = [_zonal_series(s, u) for u in (u0, u1)]
    derivs = [(npleg.legder(c), npleg.legder(c, 2)) for c in series]

    def p_and_rho(x, i):
        d1, d2 = derivs[i]
        up, upp = npleg.legval(x, d1), npleg.legval(x, d2)
        return V * (1 - x) / 2 - (1 - x * x) * up / 2, V - 2 * x * up + (1 - x * x) * upp

    xs = np.cos(np.linspace(0, np.pi, 4001))
    for i in (0, 1):
        if np.min(p_and_rho(xs, i)[1]) <= 0:
            raise ValueError("legendre route needs strictly positive curvature at the endpoints")

    def x_of(p, i):
        # p_i decreases in x; solve -p_i(x) + p = 0
        def fun(x):
            pv, rho = p_and_rho(x, i)
            return p - pv, rho / 2
        x0 = np.clip(1 - 2 * p / V, -1 + 1e-12, 1 - 1e-12)
        return _safe_newton(fun, np.full(p.shape, -1.0), np.full(p.shape, 1.0), x0)

    def svar(x):
        return np.log((1 - x) / (1 + x))

    xt = s.x
    s_target = svar(xt)
    out = []
    for t in times:
        if t in (0.0, 1.0):
            out.append(np.array(_vals(s, u0 if t == 0.0 else u1), dtype=float))
            continue
        cache = {}

        def fun(p):
            x0, x1 = x_of(p, 0), x_of(p, 1)
            cache["x"] = (x0, x1)
            r0, r1 = p_and_rho(x0, 0)[1], p_and_rho(x1, 1)[1]
            g = (1 - t) * svar(x0) + t * svar(x1) - s_target
            dg = 4 * (1 - t) / ((1 - x0 * x0) * r0) + 4 * t / ((1 - x1 * x1) * r1)
            return g, dg

        p = _safe_newton(fun, np.zeros_like(xt), np.full_like(xt, float(V)), V * (1 - xt) / 2, tol=1e-14)
        x0, x1 = x_of(p, 0), x_of(p, 1)
        col = ((1 - t) * npleg.legval(x0, series[0]) + t * npleg.legval(x1, series[1])
               + V * (np.log1p(xt) - (1 - t) * np.log1p(x0) - t * np.log1p(x1)))
        out.append(np.repeat(col[:, None], s.n_phi, axis=1))
    return out


# 1-D finite-volume model of zonal functions, uniform in theta

def _zonal_grid(n: int):
    th_f = np.linspace(0, np.pi, n + 1)
    th_c = 0.5 * (th_f[:-1] + th_f[1:])
    vol = 0.5 * (np.cos(th_f[:-1]) - np.cos(th_f[1:]))
    c = 0.5 * np.sin(th_f[1:-1]) / (np.pi / n)
    off = sp.diags([-c, -c], [1, -1], shape=(n, n))
    M = (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()
    return th_c, vol, M


def _tau_grid(du: np.ndarray, n_tau: int) -> np.ndarray:
    lo, hi = float(du.min()), float(du.max())
    span = hi - lo
    step = span / (n_tau - 1) if span > 0 else 1e-2
    k = np.arange(-3, n_tau + 3)
    grid = lo + k * step
    if span > 0:
        grid[3:n_tau + 3] = np.linspace(lo, hi, n_tau)
    return grid


def _sup_refine(vals: np.ndarray, taus: np.ndarray, t: float) -> np.ndarray:
    """Maximize g(tau) = vals[tau] + t tau over a concave sample, per column."""
    g = vals + t * taus[:, None]
    j = np.argmax(g, axis=0)
    cols = np.arange(g.shape[1])
    best = g[j, cols]
    nt = len(taus)
    inner = (j >= 2) & (j <= nt - 3)
    jj = np.clip(j, 2, nt - 3)
    gm, g0, gp = g[jj - 1, cols], g[jj, cols], g[jj + 1, cols]
    curv = gp - 2 * g0 + gm
    with np.errstate(divide="ignore", invalid="ignore"):
        par = g0 - (gp - gm) ** 2 / (8 * curv)
        # concavity bound: intersection of the outer secant lines
        h = taus[1] - taus[0]
        sl = (g[jj - 1, cols] - g[jj - 2, cols]) / h
        sr = (g[jj + 2, cols] - g[jj + 1, cols]) / h
        tl, tr = taus[jj - 1], taus[jj + 1]
        tx = (g[jj + 1, cols] - g[jj - 1, cols] + sl * tl - sr * tr) / (sl - sr)
        bound = g[jj - 1, cols] + sl * (tx - tl)
    ok = inner & (curv < 0) & np.isfinite(par)
    bound = np.where(np.isfinite(bound) & (sl > sr), bound, np.inf)
    refined = np.clip(par, best, np.maximum(bound, best))
    return np.where(ok, refined, best)


def _rooftop(project, u0: np.ndarray, u1: np.ndarray, times, n_tau: int):
    taus = _tau_grid(u1 - u0, n_tau)
    hats = []
    w = None
    for tau in taus:
        f = np.minimum(u0, u1 - tau)
        v, w = project(f, w)
        hats.append(v)
    hats = np.array(hats).reshape(len(taus), -1)
    out = []
    for t in times:
        if t == 0.0:
            out.append(u0.copy())
        elif t == 1.0:
            out.append(u1.copy())
        else:
            out.append(_sup_refine(hats, taus, t).reshape(u0.shape))
    return out


def _envelope_zonal(b: BundleSetup, u0, u1, times, n_cells: int, n_tau: int, tol: float):
    s = b.surface
    th_c, vol, M = _zonal_grid(n_cells)
    c0, c1 = _zonal_series(s, u0), _zonal_series(s, u1)
    xc = np.cos(th_c)
    f0, f1 = npleg.legval(xc, c0), npleg.legval(xc, c1)

    def project(f, w0):
        r = b.V * vol - M @ f
        w, _ = solve_obstacle(M, r, w0=w0, tol=tol, pgs_sweeps=0)
        return f - w, w

    cols = _rooftop(project, f0, f1, times, n_tau)
    out = []
    th_ext = np.concatenate([-th_c[::-1], th_c, 2 * np.pi - th_c[::-1]])
    for t, col in zip(times, cols):
        if t == 0.0:
            out.append(np.array(_vals(s, u0), dtype=float))
        elif t == 1.0:
            out.append(np.array(_vals(s, u1), dtype=float))
        else:
            spl = CubicSpline(th_ext, np.concatenate([col[::-1], col, col[::-1]]))
            out.append(np.repeat(spl(s.theta)[:, None], s.n_phi, axis=1))
    return out


def _envelope_grid(b: BundleSetup, u0, u1, times, n_tau: int, tol: float):
    s = b.surface
    M = stiffness(s)
    area = (s.weights * b.V).ravel()

    def project(f, w0):
        w, _ = solve_obstacle(M, area - M @ f.ravel(), w0=w0, tol=tol)
        return f - w.reshape(s.shape), w

    return _rooftop(project, np.array(_vals(s, u0), float), np.array(_vals(s, u1), float), times, n_tau)


def geodesic(b: BundleSetup, u0, u1, K=11, method: str = "legendre", n_tau: int | None = None,
             n_cells: int = 2048, tol: float = 1e-10, path_tol: float = 1e-4) -> MetricPath:
    """Geodesic between u0 and u1 sampled at K times (or at the given times).

    ``legendre`` interpolates partial Legendre transforms of zonal data.
    ``envelope`` takes the upper envelope sup_tau P(min(u0, u1 - tau)) + t tau;
    zonal data are solved on a fine 1-D theta grid, other data on the node grid.
    """
    s = b.surface
    times = _time_grid(K)
    for u in (u0, u1):
        if np.min(omega_h(b, u) if s.kind == "torus" else b.V + ddc_values(s, u)) < -1e-8:
            raise ValueError("endpoints must have nonnegative curvature")
    zonal = is_zonal(s, u0) and is_zonal(s, u1)
    if method == "legendre":
        if not zonal:
            raise ValueError("legendre method needs zonal sphere data")
        vals = _legendre_geodesic(b, u0, u1, times)
    elif method == "envelope":
        if zonal:
            vals = _envelope_zonal(b, u0, u1, times, n_cells, n_tau or 4097, tol)
        else:
            vals = _envelope_grid(b, u0, u1, times, n_tau or 201, tol)
    else:
        raise ValueError(f"unknown geodesic method {method!r}")
    path = MetricPath(times, [Potential(s, v) for v in vals], method=method, is_subgeodesic=True)
    E = np.array([energy_E(b, p) for p in path.potentials])
    dev = float(np.max(np.abs(E - ((1 - times) * E[0] + times * E[-1]))))
    path.diagnostics["E"] = E
    path.meta["E_chord_deviation"] = dev
    path.is_geodesic = dev < path_tol
    return path


def subgeodesic_bent(u0, u1, A: float, *, b: BundleSetup, K=11) -> MetricPath:
    """(1-t) u0 + t u1 - A t (1-t), checked against the (t, x) curvature condition.

    Along this path the curvature condition reads 2 A rho_t >= e(u1 - u0),
    and rho_t is affine in t, so it suffices to test t = 0 and t = 1.
    """
    if A < 0:
        raise ValueError("A must be nonnegative")
    s = b.surface
    v0, v1 = np.array(_vals(s, u0), float), np.array(_vals(s, u1), float)
    rho = np.minimum(b.V + ddc_values(s, v0), b.V + ddc_values(s, v1))
    e = energy_density(s, v1 - v0)
    if np.any(rho < -1e-10):
        raise ValueError("endpoints must have nonnegative curvature")
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(e > 1e-14 * max(e.max(), 1.0), e / (2 * np.maximum(rho, 0)), 0.0)
    min_A = float(np.max(need))
    if A < min_A * (1 - 1e-12):
        raise InfeasibleBendError(A, min_A)
    times = _time_grid(K)
    pots = [Potential(s, (1 - t) * v0 + t * v1 - A * t * (1 - t)) for t in times]
    return MetricPath(times, pots, method="bent", is_subgeodesic=True, meta={"A": A, "min_A": min_A})


def affine_path(s: Surface, u0, u1, K=11) -> MetricPath:
    v0, v1 = np.array(_vals(s, u0), float), np.array(_vals(s, u1), float)
    times = _time_grid(K)
    return MetricPath(times, [Potential(s, (1 - t) * v0 + t * v1) for t in times], method="affine")


# ----------------------------------------------------------------------------
# Diagnostics
# ----------------------------------------------------------------------------

def _fd_weights(offsets: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights on the given offsets for the derivative of this order."""
    n = len(offsets)
    A = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = np.prod(np.arange(1, order + 1))
    return np.linalg.solve(A, rhs)


def _time_derivatives(U: np.ndarray, t: np.ndarray, width: int = 6):
    """First and second t-derivatives with one-sided stencils of `width` points near the ends."""
    K = len(t)
    width = min(width, K)
    Ud = np.empty_like(U)
    Udd = np.empty_like(U)
    for k in range(K):
        lo = min(max(k - width // 2, 0), K - width)
        idx = np.arange(lo, lo + width)
        off = t[idx] - t[k]
        scale = np.max(np.abs(off))
        w1 = _fd_weights(off / scale, 1) / scale
        w2 = _fd_weights(off / scale, 2) / scale ** 2
        Ud[k] = np.tensordot(w1, U[idx], axes=1)
        Udd[k] = np.tensordot(w2, U[idx], axes=1)
    return Ud, Udd


@dataclass
class PathProfile:
    t: np.ndarray
    E: np.ndarray
    J: np.ndarray
    I: np.ndarray
    L: np.ndarray
    F: np.ndarray
    defect: np.ndarray
    masked_fraction: np.ndarray

    def second_differences(self, name: str) -> np.ndarray:
        y = getattr(self, name)
        h = np.diff(self.t)
        return 2 * (h[:-1] * y[2:] - (h[:-1] + h[1:]) * y[1:-1] + h[1:] * y[:-2]) / (h[:-1] * h[1:] * (h[:-1] + h[1:]))

    def chord_deviation(self, name: str) -> float:
        y = getattr(self, name)
        chord = (1 - self.t) * y[0] + self.t * y[-1]
        return float(np.max(np.abs(y - chord)))

    def rows(self) -> list[dict]:
        keys = ("t", "E", "J", "I", "L", "F", "defect", "masked_fraction")
        return [{k: float(getattr(self, k)[i]) for k in keys} for i in range(len(self.t))]


def path_profile(b: BundleSetup, path: MetricPath, mask_rel: float = 1e-8) -> PathProfile:
    """E, J, I, L, F and the geodesic defect ddot u - e(dot u) / rho_t per time sample."""
    s = b.surface
    t = path.times
    if len(t) < 5:
        raise ValueError("path_profile needs at least five time samples")
    U = path.values()
    Ud, Udd = _time_derivatives(U, t)
    rows = {k: [] for k in ("E", "J", "I", "L", "F", "defect", "masked_fraction")}
    for k, u in enumerate(U):
        E = energy_E(b, u)
        J, I = aubin_JI(b, u)
        L = functional_L(b, u)
        rho = b.V + ddc_values(s, u)
        mask = rho > mask_rel * b.V
        c = Udd[k] - energy_density(s, Ud[k]) / np.where(mask, rho, 1.0)
        rows["E"].append(E)
        rows["J"].append(J)
        rows["I"].append(I)
        rows["L"].append(L)
        rows["F"].append(E - L)
        rows["defect"].append(float(np.max(np.abs(c[mask]))) if mask.any() else np.nan)
        rows["masked_fraction"].append(float(np.sum(s.weights[~mask])))
    prof = PathProfile(t, **{k: np.array(v) for k, v in rows.items()})
    path.diagnostics.update({k: getattr(prof, k) for k in ("E", "J", "L", "F")})
    return prof


def _dzbar(s: Surface, f: np.ndarray) -> np.ndarray:
    F = np.fft.fft2(f)
    k = np.fft.fftfreq(s.n, 1.0 / s.n)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    nyq = s.n // 2
    k1 = np.where(np.abs(k1) == nyq, 0, k1)
    k2 = np.where(np.abs(k2) == nyq, 0, k2)
    d1 = 2j * np.pi * k1
    d2 = 2j * np.pi * k2
    return np.fft.ifft2(F * (d2 - s.tau * d1)) / (np.conj(s.tau) - s.tau)


def path_vector_field(b: BundleSetup, path: MetricPath, t_index: int, mask_rel: float = 1e-8) -> dict:
    """Vector field generated by dot u at one time and its failure to be holomorphic.

    Sphere: X = 2 grad(dot u) / rho as a Cartesian tangent field; the residual
    is half the integral of |trace-free symmetric part of grad X|^2, zero
    exactly for conformal fields.  Torus: V = Im(tau) d_zbar(dot u) / (pi rho)
    with residual int |d_zbar V|^2.
    """
    s = b.surface
    U = path.values()
    Ud, _ = _time_derivatives(U, path.times)
    u, ud = U[t_index], Ud[t_index]
    rho = b.V + ddc_values(s, u)
    mask = rho > mask_rel * b.V
    if not mask.any():
        raise ValueError("curvature degenerates everywhere")
    rho_safe = np.where(mask, rho, 1.0)
    if s.kind == "sphere":
        X = 2 * gradient(s, ud) / rho_safe
        X = np.where(mask, X, 0.0)
        G = np.array([gradient(s, X[a]) for a in range(3)])  # G[a, b] = d_b X_a
        x = s.xyz
        P = np.eye(3)[:, :, None, None] - x[:, None] * x[None, :]
        PG = np.einsum("ab...,bc...,cd...->ad...", P, G, P)
        S = 0.5 * (PG + np.swapaxes(PG, 0, 1))
        S = S - 0.5 * np.einsum("aa...->...", S)[None, None] * P
        dens = 0.5 * np.sum(S * S, axis=(0, 1))
        field_ = X
    else:
        Vz = s.tau.imag * _dzbar(s, ud) / (np.pi * rho_safe)
        Vz = np.where(mask, Vz, 0.0)
        dens = np.abs(_dzbar(s, Vz)) ** 2
        field_ = Vz
    return {"field": field_, "residual": float(np.sum(s.weights * dens * mask)),
            "masked_fraction": float(np.sum(s.weights[~mask])), "t": float(path.times[t_index])}
