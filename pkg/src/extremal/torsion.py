"""Relative analytic torsion on curves via the anomaly formula.

For F = L + K_X with metric exp(-u) h0 the relative torsion is

    (deg K / (2 deg L)) J(u) + N F(u),

so no zeta-regularized determinant is ever formed.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .functionals import BundleSetup, UnderResolvedError, aubin_JI, entropy_S, functional_F, sphere_setup
from .surface import Potential, _vals, build_sphere, dirichlet


@dataclass
class TorsionRecord:
    setup_id: str
    u_id: str
    relative_torsion: float
    j_coefficient: float
    J: float
    F: float
    N: int
    margin: float | None = None

    @property
    def j_term(self) -> float:
        return self.j_coefficient * self.J

    @property
    def nf_term(self) -> float:
        return self.N * self.F

    def recompute(self) -> float:
        return self.j_term + self.nf_term

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(j_term=self.j_term, nf_term=self.nf_term)
        return d


def _setup_id(b: BundleSetup) -> str:
    s = b.surface
    if s.kind == "sphere":
        return f"sphere{s.n_theta}x{s.n_phi}/O({b.V})"
    return f"torus{s.n}/tau={s.tau.real:.6g}{s.tau.imag:+.6g}i/deg1"


def relative_torsion(b: BundleSetup, u, u_id: str = "") -> TorsionRecord:
    """log det'(Laplacian for exp(-u) h0) - log det'(for h0), from the anomaly formula."""
    coef = b.deg_K / (2 * b.V)
    J, _ = aubin_JI(b, u)
    F = functional_F(b, u)
    return TorsionRecord(_setup_id(b), u_id, coef * J + b.N * F, coef, J, F, b.N)


def fang_check(m: int, u, u_id: str = "") -> tuple[float, float, float]:
    """Sharp upper bound for the torsion of O(m): returns (lhs, rhs, rhs - lhs).

    lhs is the relative torsion of O(m) with metric exp(-u) h0^m, and
    rhs = -(1/2)(1/(m+2)) int du ^ d^c u.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    if not isinstance(u, Potential) or u.surface.kind != "sphere":
        raise ValueError("fang_check needs a sphere Potential")
    s = u.surface
    b = sphere_setup(s, m + 2)
    rec = relative_torsion(b, u, u_id)
    rhs = -0.5 * dirichlet(s, u.values, u.values) / (m + 2)
    if rhs > 1e-14:
        raise ArithmeticError("the Dirichlet form must be nonnegative")
    rec.margin = rhs - rec.relative_torsion
    return rec.relative_torsion, rhs, rec.margin


def _richardson(k: np.ndarray, y: np.ndarray, order: int) -> float:
    """Extrapolate y(k) to k = infinity with a polynomial in 1/k through the last points."""
    n = min(order + 1, len(k))
    h = 1.0 / k[-n:]
    coeffs = np.polyfit(h, y[-n:], n - 1)
    return float(np.polyval(coeffs, 0.0))


def entropy_ladder(b: BundleSetup, u, k_list=(1, 2, 4, 8, 16), order: int = 2, min_theta: int = 32) -> dict:
    """Scaled relative torsion of O(kV) with the metric exp(-k u) against -S(u).

    Row k uses a grid with at least kV + 24 latitudes, evaluates F_k = F(k u)
    and the torsion T_k on that bundle, and divides by N_k = kV - 1.  The
    limit is extrapolated polynomially in 1/k.
    """
    s0 = b.surface
    if s0.kind != "sphere":
        raise ValueError("entropy_ladder needs a sphere setup")
    k_list = [int(k) for k in k_list]
    if any(k < 1 or k > 16 for k in k_list) or sorted(set(k_list)) != k_list:
        raise ValueError("k_list must be increasing integers in [1, 16]")
    uv = np.array(_vals(s0, u), dtype=float)
    a = u.spectral() if isinstance(u, Potential) else s0.analysis(uv)
    target = -entropy_S(b, uv)
    rows = []
    for k in k_list:
        Vk = k * b.V
        nt = max(min_theta, Vk + 24, s0.n_theta)
        sk = build_sphere(nt, 2 * nt)
        uk = s0.evaluate(a, sk.theta[:, None] + 0 * sk.phi[None, :], sk.phi[None, :] + 0 * sk.theta[:, None])
        bk = sphere_setup(sk, Vk)
        try:
            rec = relative_torsion(bk, Potential(sk, k * uk), f"k={k}")
        except UnderResolvedError as exc:
            rows.append({"k": k, "error": str(exc)})
            continue
        scaled = rec.relative_torsion / bk.N
        rows.append({"k": k, "N": bk.N, "F_k": rec.F, "torsion": rec.relative_torsion, "scaled": scaled,
                     "target": target, "gap": abs(scaled - target)})
    good = [r for r in rows if "scaled" in r]
    ks = np.array([r["k"] for r in good], dtype=float)
    ys = np.array([r["scaled"] for r in good])
    limit = _richardson(ks, ys, order) if len(good) >= 2 else (ys[-1] if len(ys) else np.nan)
    return {"rows": rows, "target": target, "limit": limit, "gap": abs(limit - target)}
