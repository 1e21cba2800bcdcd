"""Discretized round sphere and flat tori with quadrature and spectral calculus.

Conventions
-----------
Every surface carries a reference Kähler form ``omega0`` of unit total area,
and all densities are stored relative to it.  ``ddc(u)`` returns the density
of ``dd^c u`` against ``omega0``; on the sphere this is the round-sphere
Laplacian, on a torus it is the unit-area Laplacian divided by ``4 pi``.

The sphere chart is ``z = tan(theta/2) exp(i phi)`` with ``z = 0`` at the
north pole (``cos theta = 1``), so that ``omega0 = dA / (pi (1+|z|^2)^2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


# ----------------------------------------------------------------------------
# Associated Legendre tables
# ----------------------------------------------------------------------------

def legendre_table(lmax: int, mmax: int, x: np.ndarray, derivs: bool = True):
    """Fully normalized associated Legendre functions and their theta derivatives.

    ``P[m, l]`` is normalized so that the integral of ``P**2`` over ``[-1, 1]``
    equals 2, which makes ``P[m, l](cos theta) exp(i m phi)`` orthonormal for
    the unit-area measure on the sphere.  No Condon-Shortley phase.
    """
    x = np.asarray(x, dtype=float)
    sin = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    P = np.zeros((mmax + 1, lmax + 2) + x.shape)
    pmm = np.ones_like(x)
    for m in range(mmax + 1):
        if m > 0:
            pmm = pmm * np.sqrt((2 * m + 1) / (2.0 * m)) * sin
        P[m, m] = pmm
        if m + 1 <= lmax + 1:
            P[m, m + 1] = np.sqrt(2 * m + 3.0) * x * pmm
        for l in range(m + 2, lmax + 2):
            a = np.sqrt((4.0 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1))
            P[m, l] = a * (x * P[m, l - 1] - b * P[m, l - 2])
    if not derivs:
        return P[:, : lmax + 1], None
    dP = np.zeros((mmax + 1, lmax + 1) + x.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        for m in range(mmax + 1):
            for l in range(m, lmax + 1):
                c = np.sqrt((2 * l + 1.0) * (l * l - m * m) / (2 * l - 1.0)) if l > 0 else 0.0
                prev = P[m, l - 1] if l - 1 >= m else 0.0
                dP[m, l] = (l * x * P[m, l] - c * prev) / sin
    return P[:, : lmax + 1], dP


# ----------------------------------------------------------------------------
# Surfaces
# ----------------------------------------------------------------------------

class Surface:
    """Base class; use :func:`build_sphere` or :func:`build_torus`."""

    kind: str
    weights: np.ndarray
    shape: tuple

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    def __eq__(self, other):
        return type(self) is type(other) and self.key == other.key

    def __hash__(self):
        return hash(self.key)


class Sphere(Surface):
    kind = "sphere"

    def __init__(self, n_theta: int, n_phi: int):
        self.n_theta = int(n_theta)
        self.n_phi = int(n_phi)
        self.shape = (self.n_theta, self.n_phi)
        xg, wg = np.polynomial.legendre.leggauss(self.n_theta)
        order = np.argsort(-xg)  # north pole first
        self.x = xg[order]
        self.gl_weights = wg[order]
        self.theta = np.arccos(self.x)
        self.phi = 2 * np.pi * np.arange(self.n_phi) / self.n_phi
        self.weights = np.outer(self.gl_weights / 2.0, np.full(self.n_phi, 1.0 / self.n_phi))
        self.lmax = self.n_theta - 1
        self.mmax = min(self.lmax, (self.n_phi - 1) // 2)
        self.P, self.dP = legendre_table(self.lmax, self.mmax, self.x)
        ell = np.arange(self.lmax + 1)
        self.eig = -(ell * (ell + 1.0))
        self.sin_half = np.sqrt((1.0 - self.x) / 2.0)[:, None] * np.ones(self.n_phi)
        self.cos_half = np.sqrt((1.0 + self.x) / 2.0)[:, None] * np.ones(self.n_phi)
        self.eiphi = np.exp(1j * self.phi)[None, :] * np.ones((self.n_theta, 1))
        st = np.sin(self.theta)
        ct = self.x
        cp, sp = np.cos(self.phi), np.sin(self.phi)
        self.xyz = np.stack([np.outer(st, cp), np.outer(st, sp), np.outer(ct, np.ones(self.n_phi))])
        self.e_theta = np.stack([np.outer(ct, cp), np.outer(ct, sp), np.outer(-st, np.ones(self.n_phi))])
        self.e_phi = np.stack([np.outer(np.ones(self.n_theta), -sp), np.outer(np.ones(self.n_theta), cp),
                               np.zeros(self.shape)])
        self.key = ("sphere", self.n_theta, self.n_phi)

    @property
    def z(self) -> np.ndarray:
        """Chart coordinate at every node."""
        return self.sin_half / self.cos_half * self.eiphi

    def __repr__(self):
        return f"Sphere(n_theta={self.n_theta}, n_phi={self.n_phi})"

    # spectral transforms -------------------------------------------------
    def analysis(self, f: np.ndarray) -> np.ndarray:
        """Coefficients ``a[m, l]`` of a real field, ``m >= 0``."""
        F = np.fft.rfft(np.asarray(f, dtype=float), axis=1)[:, : self.mmax + 1] / self.n_phi
        return np.einsum("j,mlj,jm->ml", self.gl_weights / 2.0, self.P, F)

    def synthesis(self, a: np.ndarray) -> np.ndarray:
        G = np.einsum("ml,mlj->jm", a, self.P)
        return self._fourier_to_grid(G)

    def _fourier_to_grid(self, G: np.ndarray) -> np.ndarray:
        H = np.zeros((self.n_theta, self.n_phi // 2 + 1), dtype=complex)
        H[:, : G.shape[1]] = G
        H[:, 0] = H[:, 0].real
        return np.fft.irfft(H, n=self.n_phi, axis=1) * self.n_phi

    def apply_eig(self, f: np.ndarray, mult: np.ndarray) -> np.ndarray:
        """Apply a zonal spectral multiplier indexed by degree l."""
        return self.synthesis(self.analysis(f) * mult[None, :])

    def evaluate(self, a: np.ndarray, theta, phi, chunk: int = 8192) -> np.ndarray:
        """Evaluate a coefficient array at arbitrary points."""
        theta = np.asarray(theta, dtype=float)
        phi = np.broadcast_to(np.asarray(phi, dtype=float), theta.shape).ravel()
        th = theta.ravel()
        # drop trailing degrees and orders that carry nothing
        mag = np.abs(a)
        cut = 1e-16 * max(mag.max(), 1e-300)
        ls = np.nonzero(mag.max(axis=0) > cut)[0]
        ms = np.nonzero(mag.max(axis=1) > cut)[0]
        lmax = int(ls[-1]) if len(ls) else 0
        mmax = int(ms[-1]) if len(ms) else 0
        a = a[: mmax + 1, : lmax + 1]
        out = np.empty(th.shape)
        for lo in range(0, len(th), chunk):
            sl = slice(lo, lo + chunk)
            Pp, _ = legendre_table(lmax, mmax, np.cos(th[sl]), derivs=False)
            val = np.einsum("l,lp->p", a[0], Pp[0]).real
            for m in range(1, mmax + 1):
                val += 2.0 * (np.einsum("l,lp->p", a[m], Pp[m]) * np.exp(1j * m * phi[sl])).real
            out[sl] = val
        return out.reshape(theta.shape)


class Torus(Surface):
    kind = "torus"

    def __init__(self, tau: complex, n: int):
        self.tau = complex(tau)
        self.n = int(n)
        self.shape = (self.n, self.n)
        self.weights = np.full(self.shape, 1.0 / self.n ** 2)
        t = np.arange(self.n) / self.n
        self.x1, self.x2 = np.meshgrid(t, t, indexing="ij")
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        a, b = self.tau.real, self.tau.imag
        # |xi|^2 averaged over both alias representatives of Nyquist indices
        nyq = self.n // 2
        acc = np.zeros(self.shape)
        reps = 0
        for s1 in (1, -1):
            for s2 in (1, -1):
                kk1 = np.where(np.abs(k1) == nyq, s1 * nyq, k1)
                kk2 = np.where(np.abs(k2) == nyq, s2 * nyq, k2)
                acc += kk1 ** 2 + ((kk2 - kk1 * a) / b) ** 2
                reps += 1
        self.xi2 = acc / reps
        self.eig = -np.pi * b * self.xi2  # ddc multiplier
        keep = (np.abs(k1) != nyq) & (np.abs(k2) != nyq)
        self.dX = 2j * np.pi * np.where(keep, k1, 0.0)
        self.dY = 2j * np.pi * np.where(keep, (k2 - k1 * a) / b, 0.0)
        self.key = ("torus", self.tau.real, self.tau.imag, self.n)

    @property
    def z(self) -> np.ndarray:
        return self.x1 + self.x2 * self.tau

    def __repr__(self):
        return f"Torus(tau={self.tau!r}, n={self.n})"

    def apply_eig(self, f: np.ndarray, mult: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(np.fft.fft2(f) * mult).real


def build_sphere(n_theta: int, n_phi: int) -> Sphere:
    """Gauss-Legendre x uniform grid on the unit-area round sphere."""
    if n_theta < 8 or n_phi < 8:
        raise ValueError(f"sphere grid needs n_theta >= 8 and n_phi >= 8, got {n_theta}x{n_phi}")
    return Sphere(n_theta, n_phi)


def build_torus(tau: complex, n: int) -> Torus:
    """Uniform ``n x n`` lattice on C/(Z + tau Z) with unit-area flat metric."""
    tau = complex(tau)
    if tau.imag <= 0:
        raise ValueError(f"Im tau must be positive, got {tau}")
    if n < 16 or n % 2:
        raise ValueError(f"torus grid needs even n >= 16, got {n}")
    return Torus(tau, n)


# ----------------------------------------------------------------------------
# Fields
# ----------------------------------------------------------------------------

@dataclass
class Potential:
    """Real function on the nodes of a surface."""

    surface: Surface
    values: np.ndarray
    coeffs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.surface.shape:
            raise ValueError(f"values of shape {self.values.shape} do not fit {self.surface}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("potential has non-finite values")

    def spectral(self) -> np.ndarray:
        if self.coeffs is None:
            if self.surface.kind == "sphere":
                self.coeffs = self.surface.analysis(self.values)
            else:
                self.coeffs = np.fft.fft2(self.values)
        return self.coeffs

    def __add__(self, other):
        return Potential(self.surface, self.values + _vals(self.surface, other))

    __radd__ = __add__

    def __sub__(self, other):
        return Potential(self.surface, self.values - _vals(self.surface, other))

    def __rsub__(self, other):
        return Potential(self.surface, _vals(self.surface, other) - self.values)

    def __mul__(self, c):
        return Potential(self.surface, self.values * _vals(self.surface, c))

    __rmul__ = __mul__

    def __neg__(self):
        return Potential(self.surface, -self.values)


@dataclass
class Density:
    """Signed measure stored as a density against the quadrature weights."""

    surface: Surface
    values: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.surface.shape:
            raise ValueError(f"values of shape {self.values.shape} do not fit {self.surface}")
        self.total_mass = float(np.sum(self.surface.weights * self.values))


Field = Union[Potential, Density, np.ndarray, float]


def _vals(s: Surface, f) -> np.ndarray:
    if isinstance(f, (Potential, Density)):
        if f.surface != s:
            raise ValueError(f"field lives on {f.surface}, expected {s}")
        return f.values
    if np.isscalar(f):
        return np.full(s.shape, float(f))
    f = np.asarray(f)
    if f.shape != s.shape:
        raise ValueError(f"array of shape {f.shape} does not fit {s}")
    return f


def integrate(s: Surface, f: Field) -> float:
    """Quadrature of ``f omega0`` (or total mass of a density)."""
    if isinstance(f, Density):
        _vals(s, f)
        return f.total_mass
    return float(np.sum(s.weights * _vals(s, f)))


def ddc_values(s: Surface, u) -> np.ndarray:
    f = _vals(s, u)
    # the mean is annihilated anyway; removing it first keeps constants from leaking roundoff
    return s.apply_eig(f - integrate(s, f), s.eig)


def ddc(s: Surface, u) -> Density:
    """Density of dd^c u against omega0, computed spectrally."""
    return Density(s, ddc_values(s, u))


def inverse_ddc(s: Surface, f) -> np.ndarray:
    """Mean-zero solution v of ddc(v) = f - mean(f)."""
    eig = s.eig
    inv = np.zeros_like(eig)
    nz = eig != 0
    inv[nz] = 1.0 / eig[nz]
    return s.apply_eig(_vals(s, f), inv)


def dirichlet(s: Surface, u, v) -> float:
    """The bilinear form of du ^ d^c v."""
    return -integrate(s, _vals(s, u) * ddc_values(s, v))


def gradient(s: Surface, u) -> np.ndarray:
    """Gradient of u: Cartesian tangent vectors on the sphere, (d/dX, d/dY) on a torus."""
    f = _vals(s, u)
    if s.kind == "sphere":
        a = s.analysis(f)
        dth = s._fourier_to_grid(np.einsum("ml,mlj->jm", a, s.dP))
        m = np.arange(s.mmax + 1)
        G = np.einsum("ml,mlj->jm", a, s.P) * (1j * m)[None, :]
        dph = s._fourier_to_grid(G) / np.sin(s.theta)[:, None]
        return s.e_theta * dth + s.e_phi * dph
    F = np.fft.fft2(f)
    return np.stack([np.fft.ifft2(F * s.dX).real, np.fft.ifft2(F * s.dY).real])


def energy_density(s: Surface, u) -> np.ndarray:
    """Pointwise density e(u) with integral equal to dirichlet(u, u)."""
    g = gradient(s, u)
    if s.kind == "sphere":
        return np.sum(g * g, axis=0)
    return s.tau.imag * np.sum(g * g, axis=0) / (4 * np.pi)


def evaluate(s: Sphere, u, theta, phi) -> np.ndarray:
    """Spectral evaluation of a sphere potential at arbitrary points."""
    a = u.spectral() if isinstance(u, Potential) else s.analysis(_vals(s, u))
    return s.evaluate(a, theta, phi)


# ----------------------------------------------------------------------------
# Torus Green function
# ----------------------------------------------------------------------------

def _theta1(v: np.ndarray, tau: complex, terms: int = 40) -> np.ndarray:
    q = np.exp(1j * np.pi * tau)
    out = np.zeros(np.shape(v), dtype=complex)
    for n in range(terms):
        out += (-1) ** n * q ** ((n + 0.5) ** 2) * np.sin((2 * n + 1) * v)
    return 2 * out


def dedekind_eta(tau: complex, terms: int = 200) -> complex:
    q2 = np.exp(2j * np.pi * tau)
    prod = np.prod(1 - q2 ** np.arange(1, terms + 1))
    return np.exp(1j * np.pi * tau / 12) * prod


def _reduce(s: Torus, dz: np.ndarray) -> np.ndarray:
    """Representative of dz modulo the lattice with lattice coordinates in [-1/2, 1/2)."""
    b = s.tau.imag
    t2 = dz.imag / b
    t1 = dz.real - t2 * s.tau.real
    t1 = t1 - np.floor(t1 + 0.5)
    t2 = t2 - np.floor(t2 + 0.5)
    return t1 + t2 * s.tau


def green_exp(s: Torus, p: complex, z: np.ndarray, a: float = 1.0) -> np.ndarray:
    """exp(a g_p(z)) at arbitrary points; a smooth periodic function for a = 1."""
    d = _reduce(s, np.asarray(z, dtype=complex) - p)
    b = s.tau.imag
    eta = dedekind_eta(s.tau)
    W = np.abs(_theta1(np.pi * d, s.tau)) ** 2 * np.exp(-2 * np.pi * d.imag ** 2 / b) / abs(eta) ** 2
    return W ** a


@dataclass
class GreenFunction:
    """g_p split as remainder + log|z - p|^2 (nearest lattice image)."""

    surface: Torus
    p_index: tuple
    p: complex
    remainder: Potential
    log_term: np.ndarray = field(repr=False)

    def weight(self, a: float = 1.0) -> np.ndarray:
        """exp(a g_p) at the nodes (zero at p)."""
        return green_exp(self.surface, self.p, self.surface.z, a)

    def values(self) -> np.ndarray:
        """g_p at the nodes, -inf at p."""
        with np.errstate(divide="ignore"):
            return self.remainder.values + self.log_term

    def at(self, z) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(green_exp(self.surface, self.p, z))


def green_function(s: Surface, p=(0, 0)) -> GreenFunction:
    """Green function with dd^c g_p = delta_p - omega0 and zero mean.

    Built from the Jacobi theta function; the mean is removed in closed form
    through the Dedekind eta function.
    """
    if s.kind != "torus":
        raise ValueError("green_function needs a torus surface")
    i, j = p
    pz = complex(s.z[i, j])
    d = _reduce(s, s.z - pz)
    W = green_exp(s, pz, s.z)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.log(np.abs(d) ** 2)
        rem = np.log(W) - log_term
    eta = dedekind_eta(s.tau)
    rem[i, j] = np.log(4 * np.pi ** 2 * abs(eta) ** 4)
    return GreenFunction(s, (i, j), pz, Potential(s, rem), log_term)


# ----------------------------------------------------------------------------
# Möbius action on the sphere
# ----------------------------------------------------------------------------

def mobius_pullback(s: Sphere, u, F, degree: int = 1) -> Potential:
    """v = F*(psi0 + u) - psi0 for the weight of the degree-``degree`` bundle.

    F acts by z -> (a z + b)/(c z + d); it is rescaled to unit determinant.
    """
    if s.kind != "sphere":
        raise ValueError("mobius_pullback needs a sphere surface")
    F = np.asarray(F, dtype=complex)
    det = np.linalg.det(F)
    if abs(det) < 1e-14:
        raise ValueError("singular Möbius matrix")
    F = F / np.sqrt(det)
    (a, b), (c, d) = F
    Z0 = s.cos_half.astype(complex)
    Z1 = s.sin_half * s.eiphi
    A = a * Z1 + b * Z0
    B = c * Z1 + d * Z0
    na, nb = np.abs(A) ** 2, np.abs(B) ** 2
    v = degree * np.log(na + nb)
    uval = _vals(s, u)
    if np.any(uval != 0):
        theta = np.arccos(np.clip((nb - na) / (na + nb), -1, 1))
        phi = np.angle(A) - np.angle(B)
        a_u = u.spectral() if isinstance(u, Potential) else s.analysis(uval)
        v = v + s.evaluate(a_u, theta, phi)
    return Potential(s, v)


def boost_matrix(direction, rapidity: float) -> np.ndarray:
    """Hermitian SL(2,C) element exp(rapidity/2 * n.sigma)."""
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    sig = n[2] * np.array([[1, 0], [0, -1]]) + n[0] * np.array([[0, 1], [1, 0]]) \
        + n[1] * np.array([[0, -1j], [1j, 0]])
    return np.cosh(rapidity / 2) * np.eye(2) + np.sinh(rapidity / 2) * sig
