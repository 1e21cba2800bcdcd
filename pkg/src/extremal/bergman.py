"""Bergman kernels, Toeplitz operators, the determinantal point process and
the L^2-minimal solution of the d-bar equation on the sphere."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, lgamma, log

import numpy as np
import scipy.linalg

from . import kernels
from .functionals import BundleSetup, cholesky, gram_matrix, omega_values
from .surface import Density, _vals, evaluate


@dataclass(eq=False)
class GramState:
    setup: BundleSetup
    u: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    chol: np.ndarray = field(repr=False)
    logdet: float = 0.0

    @property
    def C(self) -> np.ndarray:
        """Change of basis with C^H G C = Id, i.e. orthonormal sections are C^T s."""
        return scipy.linalg.solve_triangular(self.chol, np.eye(len(self.G)), lower=True).T

    @property
    def orthonormal(self) -> np.ndarray:
        """Orthonormal sections at the nodes (unitary frame), N x n_nodes."""
        return scipy.linalg.solve_triangular(self.chol, self.setup.sections, lower=True)

    @property
    def weight(self) -> np.ndarray:
        return (self.setup.surface.weights * np.exp(-self.u)).ravel()


def gram(b: BundleSetup, u) -> GramState:
    uv = np.array(_vals(b.surface, u), dtype=float)
    G = gram_matrix(b, uv)
    Lc = cholesky(G)
    return GramState(b, uv, G, Lc, float(2 * np.sum(np.log(np.abs(np.diag(Lc))))))


def _beta_values(g: GramState) -> np.ndarray:
    Phi = g.orthonormal
    s = g.setup.surface
    return np.sum(np.abs(Phi) ** 2, axis=0).reshape(s.shape) * np.exp(-g.u) / g.setup.N


def bergman_measure(g: GramState) -> Density:
    return Density(g.setup.surface, _beta_values(g))


# ----------------------------------------------------------------------------
# Kernel at chart points
# ----------------------------------------------------------------------------

def _chart_angles(z):
    z = np.asarray(z, dtype=complex)
    return 2 * np.arctan(np.abs(z)), np.angle(z)


def _poly_coeffs(g: GramState) -> np.ndarray:
    b = g.setup
    return scipy.linalg.solve_triangular(g.chol, np.diag(b.normalizers).astype(complex), lower=True)


def orthonormal_at(g: GramState, z) -> np.ndarray:
    """Orthonormal sections as polynomials in the chart, evaluated at z (N x len(z))."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    powers = z[None, :] ** np.arange(g.setup.N)[:, None]
    return _poly_coeffs(g) @ powers


def weight_at(g: GramState, z) -> np.ndarray:
    """exp(-psi) = (1+|z|^2)^(-m) exp(-u) at chart points."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    th, ph = _chart_angles(z)
    uz = evaluate(g.setup.surface, g.u, th, ph)
    return (1 + np.abs(z) ** 2) ** (-g.setup.m) * np.exp(-uz)


def bergman_kernel(g: GramState, x, y) -> np.ndarray:
    """K(x, y) = sum_i s_i(y) conj(s_i(x)) over an orthonormal basis."""
    if g.setup.surface.kind != "sphere":
        raise ValueError("chart kernel is implemented for the sphere")
    sx = orthonormal_at(g, x)
    sy = orthonormal_at(g, y)
    return np.einsum("ip,iq->pq", sx.conj(), sy)


def reproducing_defect(g: GramState, x) -> np.ndarray:
    """N beta(x) - int |K(x,y)|^2 exp(-psi(x) - psi(y)) over the grid, at chart points x."""
    sx = orthonormal_at(g, x)
    Phi = g.orthonormal  # unitary frame already carries exp(-m psi0/2)
    K = sx.conj().T @ Phi  # len(x) x nodes
    wx = weight_at(g, x)
    integral = (np.abs(K) ** 2) @ g.weight * wx
    Nbeta = np.sum(np.abs(sx) ** 2, axis=0) * wx
    return Nbeta - integral


# ----------------------------------------------------------------------------
# Toeplitz operators and derivatives of L
# ----------------------------------------------------------------------------

def toeplitz_matrix(b: BundleSetup, f) -> np.ndarray:
    """T[f] in the basis orthonormal for the reference weight."""
    w = (b.surface.weights * _vals(b.surface, f)).ravel()
    S = b.sections
    T = (S * w) @ S.conj().T
    return 0.5 * (T + T.conj().T)


def _toeplitz_at(g: GramState, v: np.ndarray) -> np.ndarray:
    Phi = g.orthonormal
    T = (Phi * (g.weight * v.ravel())) @ Phi.conj().T
    return 0.5 * (T + T.conj().T)


def dL_direction(g: GramState, v) -> float:
    """Directional derivative of L at u along v: int v beta_u."""
    s = g.setup.surface
    return float(np.sum(s.weights * _vals(s, v) * _beta_values(g)))


def R_op(g: GramState, v) -> Density:
    """Exact derivative of beta along u + t v.

    (1/N) int |K(x,y)|^2 exp(-psi(x)-psi(y)) v(y) - beta(x) v(x); mass zero.
    """
    s = g.setup.surface
    vv = _vals(s, v)
    Phi = g.orthonormal
    T = _toeplitz_at(g, vv)
    kern = np.real(np.sum(Phi.conj() * (T @ Phi), axis=0)).reshape(s.shape)
    kern = kern * np.exp(-g.u) / g.setup.N
    return Density(s, kern - _beta_values(g) * vv)


def hessian_L_affine(g: GramState, v) -> float:
    """d^2/ds^2 L(u + s v) = (1/N) Tr(T[v]^2 - T[v^2]) in the orthonormal basis."""
    vv = _vals(g.setup.surface, v)
    T1 = _toeplitz_at(g, vv)
    T2 = _toeplitz_at(g, vv * vv)
    return float(np.real(np.trace(T1 @ T1) - np.trace(T2))) / g.setup.N


# ----------------------------------------------------------------------------
# Determinantal point process
# ----------------------------------------------------------------------------

def coulomb_log_normalizer(N: int) -> float:
    """log(1/Z_N) with 1/Z_N = N^N prod_j binom(N-1, j) / N!."""
    return N * log(N) + sum(log(comb(N - 1, j)) for j in range(N)) - lgamma(N + 1)


def chordal_sq(z1, z2) -> np.ndarray:
    """Squared chordal distance on the sphere of diameter one."""
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    return np.abs(z1 - z2) ** 2 / ((1 + np.abs(z1) ** 2) * (1 + np.abs(z2) ** 2))


def coulomb_logdensity(pts) -> float:
    """log prod_{i<j} |x_i - x_j|^2 / Z_N for chart points x_i, N = len(pts)."""
    z = np.asarray(pts, dtype=complex)
    N = len(z)
    iu = np.triu_indices(N, 1)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(chordal_sq(z[iu[0]], z[iu[1]]))) + coulomb_log_normalizer(N))


def dpp_logdensity(b: BundleSetup, u, pts) -> float:
    """Normalized log density of the determinantal process for psi0 + u.

    The density is |det s_i(x_j)|^2 exp(-sum psi(x_j)) / Z with respect to
    omega0^N, Z = N! det G(u).  At u = 0 this coincides with the Coulomb
    form, see :func:`coulomb_logdensity`.
    """
    if b.surface.kind != "sphere":
        raise ValueError("dpp_logdensity needs a sphere setup")
    z = np.asarray(pts, dtype=complex)
    if len(z) != b.N:
        raise ValueError(f"need {b.N} points, got {len(z)}")
    g = gram(b, u)
    A = b.normalizers[:, None] * z[None, :] ** np.arange(b.N)[:, None]
    sign, logabs = np.linalg.slogdet(A)
    if sign == 0:
        return -np.inf
    th, ph = _chart_angles(z)
    uz = evaluate(b.surface, g.u, th, ph)
    psi = b.m * np.log1p(np.abs(z) ** 2) + uz
    return float(2 * logabs - np.sum(psi) - lgamma(b.N + 1) - g.logdet)


def _xyz_to_angles(x: np.ndarray):
    return np.arccos(np.clip(x[..., 2], -1, 1)), np.arctan2(x[..., 1], x[..., 0])


def sample_coulomb(N: int, n_samples: int, seed: int, burn_frac: float = 0.1, target: float = 0.4):
    """Metropolis chain for prod |x_i - x_j|^2 on (S^2)^N.

    Single-site moves rotate one point by a Gaussian angle in a uniformly
    random tangent direction.  The step size is tuned during burn-in.
    Returns (samples of shape (n_samples, N, 3), acceptance rate, step).
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(N, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    step = 1.0 / np.sqrt(N)
    n_burn = max(int(burn_frac * n_samples), 10)
    chunks = 10
    per = max(n_burn // chunks, 1)
    for _ in range(chunks):
        acc, _ = _run_chain(x, per, step, rng, record=False)
        step *= np.exp(acc / (per * N) - target)
        step = float(np.clip(step, 1e-3, np.pi))
    acc, samples = _run_chain(x, n_samples, step, rng, record=True)
    return samples, acc / (n_samples * N), step


def _run_chain(x: np.ndarray, n_sweeps: int, step: float, rng, record: bool):
    N = x.shape[0]
    T = n_sweeps * N
    gauss = rng.normal(size=(T, 3))
    angles = step * rng.normal(size=T)
    unif = rng.random(T)
    out = np.empty((n_sweeps if record else 0, N, 3))
    acc = kernels.metropolis_sphere(x, gauss, angles, unif, out)
    return acc, out


def _block_bootstrap(w: np.ndarray, stat, n_boot: int, rng) -> float:
    n = len(w)
    blk = max(int(np.sqrt(n)), 1)
    nb = n // blk
    blocks = w[: nb * blk].reshape(nb, blk)
    vals = np.empty(n_boot)
    for r in range(n_boot):
        idx = rng.integers(0, nb, nb)
        vals[r] = stat(blocks[idx].ravel())
    return float(np.std(vals, ddof=1))


def mc_estimate_L(b: BundleSetup, u, n_samples: int, seed: int, n_boot: int = 200) -> dict:
    """Monte-Carlo estimate of L as -(1/N) log E[exp(-sum u(x_i))] under the reference process."""
    if b.surface.kind != "sphere":
        raise ValueError("mc_estimate_L needs a sphere setup")
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    N = b.N
    uv = _vals(b.surface, u)
    samples, rate, step = sample_coulomb(N, n_samples, seed)
    th, ph = _xyz_to_angles(samples)
    usum = evaluate(b.surface, uv, th.ravel(), ph.ravel()).reshape(th.shape).sum(axis=1)
    shift = usum.min()
    w = np.exp(-(usum - shift))

    def stat(x):
        return shift / N - np.log(np.mean(x)) / N

    est = stat(w)
    err = _block_bootstrap(w, stat, n_boot, np.random.default_rng(seed + 1))
    return {"estimate": float(est), "stderr": err, "acceptance": float(rate), "step": step,
            "seed": seed, "n_samples": n_samples, "mixing_ok": 0.1 <= rate <= 0.9}


# ----------------------------------------------------------------------------
# Minimal solution of the d-bar equation
# ----------------------------------------------------------------------------
#
# Sections of L + K_X are written alpha = a(z) dz and L-valued (1,1)-forms as
# g = gamma dz^dzbar.  Fields are handled in the unitary frame
#   a_hat = a (1+|z|^2)^(-m/2),   gamma_hat = gamma (1+|z|^2)^(1 - m/2),
# so that, with rho the density of omega_psi,
#   ||alpha||^2 = 2 pi int |a_hat|^2 exp(-u) omega0,
#   ||g||^2     = 2 pi int |gamma_hat|^2 exp(-u) / rho omega0.

def _trig(s, i: int, j: int) -> np.ndarray:
    return s.sin_half ** i * s.cos_half ** j


def section_basis(b: BundleSetup, K: int):
    """Smooth sections z^i zbar^j (1+|z|^2)^-K and their d-bar images."""
    s = b.surface
    m = b.m
    alphas, gammas, labels = [], [], []
    for j in range(K + 1):
        for i in range(m + K + 1):
            e = s.eiphi ** (i - j)
            alphas.append(_trig(s, i + j, 2 * K + m - i - j) * e)
            gam = np.zeros(s.shape, dtype=complex)
            if j >= 1:
                gam += j * _trig(s, i + j - 1, 2 * K + m - i - j + 1)
            if j < K:
                gam += (j - K) * _trig(s, i + j + 1, 2 * K + m - i - j - 1)
            gammas.append(gam * s.eiphi ** (i - j + 1))
            labels.append((i, j))
    return np.array(alphas), np.array(gammas), labels


def holomorphic_quotient_data(b: BundleSetup, h) -> np.ndarray:
    """gamma_hat for g = (d dbar psi) h with psi the reference weight and h in H^0(L)."""
    s = b.surface
    V = b.V
    h = np.asarray(h, dtype=complex)
    if len(h) > V + 1:
        raise ValueError(f"h has degree above {V}")
    out = np.zeros(s.shape, dtype=complex)
    for k, hk in enumerate(h):
        out += hk * _trig(s, k, V - k) * s.eiphi ** k
    return V * out


def dbar_from_coefficients(b: BundleSetup, coeffs, K: int) -> np.ndarray:
    _, gammas, _ = section_basis(b, K)
    return np.tensordot(np.asarray(coeffs, dtype=complex), gammas, axes=1)


def dbar_minimal(b: BundleSetup, u, gamma_hat, K: int = 4, rel_tol: float = 1e-6) -> dict:
    """L^2(exp(-psi)) minimal solution of dbar alpha = g, psi = psi0 + u.

    ``gamma_hat`` holds g in the unitary frame.  A particular solution is fitted
    in the truncated basis of degree K; projecting it off the holomorphic
    sections gives the minimal one.
    """
    if b.surface.kind != "sphere":
        raise ValueError("dbar_minimal needs a sphere setup")
    s = b.surface
    uv = _vals(s, u)
    rho = omega_values(b, uv)
    if np.sum(s.weights * (rho <= 0)) > 0:
        raise ValueError("curvature of psi is not positive on the grid")
    wa = 2 * np.pi * (s.weights * np.exp(-uv)).ravel()
    wg = wa / rho.ravel()
    gh = np.asarray(gamma_hat, dtype=complex).ravel()
    norm_g = float(np.sum(wg * np.abs(gh) ** 2))
    if norm_g == 0:
        return {"alpha": np.zeros(s.shape, dtype=complex), "norm_alpha": 0.0, "norm_g": 0.0,
                "fit_residual": 0.0, "equality": True}
    alphas, gammas, _ = section_basis(b, K)
    A = (gammas.reshape(len(gammas), -1) * np.sqrt(wg)).T
    c, *_ = np.linalg.lstsq(A, np.sqrt(wg) * gh, rcond=1e-12)
    fit = c @ gammas.reshape(len(gammas), -1)
    fit_res = float(np.sqrt(np.sum(wg * np.abs(fit - gh) ** 2) / norm_g))
    a0 = c @ alphas.reshape(len(alphas), -1)
    H = b.sections / b.normalizers[:, None]
    G = (H * wa) @ H.conj().T
    proj = np.linalg.solve(G.T, (H.conj() * wa) @ a0)
    a_min = a0 - proj @ H
    norm_a = float(np.sum(wa * np.abs(a_min) ** 2))
    return {"alpha": a_min.reshape(s.shape), "norm_alpha": norm_a, "norm_g": norm_g,
            "fit_residual": fit_res, "equality": abs(norm_g - norm_a) <= rel_tol * norm_g}
