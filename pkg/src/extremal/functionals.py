"""Energy functionals of metrics on a line bundle over a discretized curve.

A :class:`BundleSetup` fixes the line bundle L and the section basis of
H^0(L + K_X) used by L.  Potentials u describe the metric exp(-u) h0, whose
curvature form is ``omega_u = omega_ref + dd^c u`` with ``omega_ref = V omega0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .surface import GreenFunction, Surface, _vals, ddc_values, dirichlet, green_function, integrate


class UnderResolvedError(ArithmeticError):
    """Raised when a Gram matrix fails to be positive definite on the grid."""


@dataclass(eq=False)
class BundleSetup:
    surface: Surface
    degree: int
    sections: np.ndarray = field(repr=False)  # N x n_nodes, unitary frame
    normalizers: np.ndarray = field(repr=False)
    green: GreenFunction | None = field(default=None, repr=False)

    @property
    def V(self) -> int:
        return self.degree

    @property
    def N(self) -> int:
        return self.sections.shape[0]

    @property
    def m(self) -> int:
        return self.degree - 2 if self.surface.kind == "sphere" else 0

    @property
    def deg_K(self) -> int:
        return -2 if self.surface.kind == "sphere" else 0


def sphere_setup(s: Surface, degree: int) -> BundleSetup:
    """Bundle O(degree) on the sphere; H^0(L+K) = O(m), m = degree - 2."""
    if s.kind != "sphere":
        raise ValueError("sphere_setup needs a sphere surface")
    if degree < 2:
        raise ValueError(f"degree must be >= 2, got {degree}")
    m = degree - 2
    i = np.arange(m + 1)
    c = np.sqrt(m + 1.0) * np.exp(0.5 * (gammaln(m + 1) - gammaln(i + 1) - gammaln(m - i + 1)))
    S = np.empty((m + 1, s.n_nodes), dtype=complex)
    for i in range(m + 1):
        S[i] = (c[i] * s.sin_half ** i * s.cos_half ** (m - i) * s.eiphi ** i).ravel()
    return BundleSetup(s, degree, S, c)


def torus_setup(s: Surface, p=(0, 0)) -> BundleSetup:
    """Degree-one bundle L_p on a torus with section weight exp(g_p)."""
    if s.kind != "torus":
        raise ValueError("torus_setup needs a torus surface")
    g = green_function(s, p)
    S = np.sqrt(g.weight(1.0)).ravel()[None, :].astype(complex)
    return BundleSetup(s, 1, S, np.ones(1), g)


def omega_values(b: BundleSetup, u) -> np.ndarray:
    """Density of omega_u = V omega0 + dd^c u against omega0."""
    return b.V + ddc_values(b.surface, u)


def energy_E(b: BundleSetup, u) -> float:
    """E(u) = (1/2V) int u (omega_u + omega_ref)."""
    s = b.surface
    uv = _vals(s, u)
    return integrate(s, uv) + integrate(s, uv * ddc_values(s, uv)) / (2 * b.V)


def aubin_JI(b: BundleSetup, u) -> tuple[float, float]:
    s = b.surface
    uv = _vals(s, u)
    J = 0.5 * dirichlet(s, uv, uv)
    I = integrate(s, uv * (b.V - omega_values(b, uv)))
    return J, I


def gram_matrix(b: BundleSetup, u) -> np.ndarray:
    """<s_i, s_j> for the metric exp(-u) in the normalized section basis."""
    w = (b.surface.weights * np.exp(-_vals(b.surface, u))).ravel()
    S = b.sections
    G = (S * w) @ S.conj().T
    return 0.5 * (G + G.conj().T)


def cholesky(G: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.cholesky(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise UnderResolvedError("Gram matrix is not positive definite; refine the grid") from exc


def log_det_gram(b: BundleSetup, u) -> float:
    Lc = cholesky(gram_matrix(b, u))
    return float(2 * np.sum(np.log(np.abs(np.diag(Lc)))))


def functional_L(b: BundleSetup, u) -> float:
    return -log_det_gram(b, u) / b.N


def functional_F(b: BundleSetup, u, delta: float | None = None, q: float | None = None) -> float:
    """F = E - L, or its deformations F - delta J and E + (1/q) log int exp(q(g_p - u))."""
    if delta is not None and q is not None:
        raise ValueError("choose at most one of delta, q")
    if (delta is not None or q is not None) and b.surface.kind != "torus":
        raise ValueError("deformed functionals are defined for torus setups")
    if q is not None:
        if not 0 < q <= 1:
            raise ValueError(f"q must lie in (0, 1], got {q}")
        s = b.surface
        w = b.green.weight(q) * np.exp(-q * _vals(s, u))
        return energy_E(b, u) + np.log(integrate(s, w)) / q
    F = energy_E(b, u) - functional_L(b, u)
    if delta is not None:
        if delta < 0:
            raise ValueError(f"delta must be nonnegative, got {delta}")
        F -= delta * aubin_JI(b, u)[0]
    return F


def _positive_omega(b: BundleSetup, u) -> np.ndarray:
    om = omega_values(b, u)
    bad = np.argwhere(om <= 0)
    if len(bad):
        raise ValueError(f"omega_u is not positive at node {tuple(bad[0])} (value {om[tuple(bad[0])]:.3e})")
    return om


def entropy_S(b: BundleSetup, u) -> float:
    """(1/2V) int log(omega_u / omega_ref) omega_u."""
    om = _positive_omega(b, u)
    return integrate(b.surface, np.log(om / b.V) * om) / (2 * b.V)


def bergman_density(b: BundleSetup, u) -> np.ndarray:
    s = b.surface
    uv = _vals(s, u)
    Lc = cholesky(gram_matrix(b, uv))
    Phi = scipy.linalg.solve_triangular(Lc, b.sections, lower=True)
    return (np.sum(np.abs(Phi) ** 2, axis=0).reshape(s.shape) * np.exp(-uv)) / b.N


def bergman_ratio(b: BundleSetup, u) -> float:
    """max over nodes of beta_u / (omega_u / V)."""
    om = _positive_omega(b, u)
    return float(np.max(bergman_density(b, u) / (om / b.V)))


def mto_margin(b: BundleSetup, u) -> float:
    """-int u + (1/4) int du^d^c u - log int exp(-u) on the degree-two setup."""
    s = b.surface
    uv = _vals(s, u)
    lhs = np.log(integrate(s, np.exp(-uv)))
    rhs = -integrate(s, uv) + 0.25 * dirichlet(s, uv, uv)
    return float(rhs - lhs)


def gram_bound_margin(b: BundleSetup, u) -> float:
    """Slack in log det G <= -(m+1) int u + ((m+1)/(m+2)) (1/2) int du^d^c u."""
    s = b.surface
    uv = _vals(s, u)
    m = b.m
    rhs = -(m + 1) * integrate(s, uv) + (m + 1) / (m + 2) * 0.5 * dirichlet(s, uv, uv)
    return float(rhs - log_det_gram(b, uv))
