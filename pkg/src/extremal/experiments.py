"""Named experiments run from INI configs.

Each experiment reads typed keys through :class:`Config`, which collects
every validation problem before anything is computed, and returns a
:class:`Result` holding tables, records and plot curves.  Writing them to
disk is the runner's job.
"""
from __future__ import annotations

import configparser
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bergman, envelopes, functionals, solvers, torsion
from .surface import Potential, boost_matrix, build_sphere, build_torus, ddc_values, mobius_pullback


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


_MISSING = object()


class _DryRun(Exception):
    pass


class Config:
    """Typed view of an INI file; problems accumulate in ``self.problems``."""

    def __init__(self, parser: configparser.ConfigParser, seed_override: int | None = None):
        self.parser = parser
        self.problems: list[str] = []
        self.seed_override = seed_override
        self.used: dict[str, dict[str, str]] = {}
        self.dry = False

    @classmethod
    def from_text(cls, text: str, seed_override: int | None = None) -> "Config":
        p = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            p.read_string(text)
        except configparser.Error as exc:
            raise ConfigError([f"unreadable config: {exc}"]) from None
        return cls(p, seed_override)

    def _raw(self, section, key, default):
        if self.parser.has_option(section, key):
            raw = self.parser.get(section, key).strip()
        elif default is _MISSING:
            self.problems.append(f"[{section}] {key}: required field is missing")
            return None
        else:
            raw = None if default is None else str(default)
        if raw is not None:
            self.used.setdefault(section, {})[key] = raw
        return raw

    def _convert(self, section, key, default, conv, kind, check=None, hint=""):
        raw = self._raw(section, key, default)
        if raw is None:
            return None
        try:
            val = conv(raw)
        except ValueError:
            self.problems.append(f"[{section}] {key}: expected {kind}, got {raw!r}")
            return None
        if check is not None and not check(val):
            self.problems.append(f"[{section}] {key}: {hint} (got {raw!r})")
            return None
        return val

    def int(self, section, key, default=_MISSING, lo=None, hi=None):
        def ok(v):
            return (lo is None or v >= lo) and (hi is None or v <= hi)
        return self._convert(section, key, default, int, "an integer", ok, _range_hint(lo, hi))

    def float(self, section, key, default=_MISSING, lo=None, hi=None, strict_lo=False):
        def ok(v):
            if not np.isfinite(v):
                return False
            if lo is not None and (v <= lo if strict_lo else v < lo):
                return False
            return hi is None or v <= hi
        hint = _range_hint(lo, hi, strict_lo)
        return self._convert(section, key, default, float, "a number", ok, hint or "must be finite")

    def str(self, section, key, default=_MISSING, choices=None):
        def ok(v):
            return choices is None or v in choices
        hint = f"must be one of {', '.join(choices)}" if choices else ""
        return self._convert(section, key, default, str, "text", ok, hint)

    def floats(self, section, key, default=_MISSING):
        return self._convert(section, key, default, _float_list, "a comma-separated list of numbers")

    def ints(self, section, key, default=_MISSING):
        return self._convert(section, key, default, lambda r: [int(x) for x in _split(r)],
                             "a comma-separated list of integers")

    def seed(self, section="fields", key="seed", default=0):
        s = self.int(section, key, default, lo=0)
        if self.seed_override is not None:
            self.used.setdefault(section, {})[key] = str(self.seed_override)
            return self.seed_override
        return s

    def check(self):
        if self.problems:
            raise ConfigError(self.problems)
        if self.dry:
            raise _DryRun()


def _range_hint(lo, hi, strict=False):
    if lo is not None and hi is not None:
        return f"must lie in [{lo}, {hi}]"
    if lo is not None:
        return f"must be {'>' if strict else '>='} {lo}"
    if hi is not None:
        return f"must be <= {hi}"
    return ""


def _split(raw: str):
    parts = [x.strip() for x in raw.split(",") if x.strip()]
    if not parts:
        raise ValueError("empty list")
    return parts


def _float_list(raw: str):
    vals = [float(x) for x in _split(raw)]
    if not all(np.isfinite(vals)):
        raise ValueError("non-finite entry")
    return vals


@dataclass
class Result:
    tables: dict = field(default_factory=dict)     # name -> list of row dicts
    records: dict = field(default_factory=dict)    # name -> list of dicts (JSON lines)
    plots: dict = field(default_factory=dict)      # name -> (x, y, xlabel, ylabel)
    paths: dict = field(default_factory=dict)      # name -> (MetricPath, PathProfile | None)
    summary: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    failed: list = field(default_factory=list)     # numerical failures worth exit status 3


# ----------------------------------------------------------------------------
# Shared config sections
# ----------------------------------------------------------------------------

def read_surface(cfg: Config, kinds=("sphere", "torus"), defaults=None):
    d = {"kind": kinds[0], "n_theta": 64, "n_phi": 128, "n": 128, "tau_re": 0.0, "tau_im": 1.0}
    d.update(defaults or {})
    kind = cfg.str("surface", "kind", d["kind"], choices=kinds)
    if kind == "sphere":
        nt = cfg.int("surface", "n_theta", d["n_theta"], lo=8, hi=512)
        nphi = cfg.int("surface", "n_phi", d["n_phi"], lo=8, hi=1024)
        return ("sphere", nt, nphi)
    if kind == "torus":
        n = cfg.int("surface", "n", d["n"], lo=16, hi=1024)
        if n is not None and n % 2:
            cfg.problems.append(f"[surface] n: must be even (got {n})")
        tr = cfg.float("surface", "tau_re", d["tau_re"])
        ti = cfg.float("surface", "tau_im", d["tau_im"], lo=0.0, strict_lo=True)
        return ("torus", n, complex(tr or 0.0, ti or 1.0))
    return None


def build(spec):
    if spec[0] == "sphere":
        return build_sphere(spec[1], spec[2])
    return build_torus(spec[2], spec[1])


def read_fields(cfg: Config, count=10, amplitude=0.5, family="random"):
    return {
        "family": cfg.str("fields", "family", family, choices=("random", "zonal", "zero")),
        "count": cfg.int("fields", "count", count, lo=1, hi=10000),
        "seed": cfg.seed(),
        "amplitude": cfg.float("fields", "amplitude", amplitude, lo=0.0),
        "band": cfg.int("fields", "band", 4, lo=1, hi=16),
        "psh_fraction": cfg.float("fields", "psh_fraction", 0.5, lo=0.0, hi=1.0),
    }


def make_field(s, family: str, seed: int, amplitude: float, band: int, degree: int | None = None,
               psh_fraction: float | None = None) -> np.ndarray:
    """Seeded test function; with a degree, rescaled so that V + dd^c u >= (1 - psh_fraction) V."""
    if family == "zero":
        return np.zeros(s.shape)
    if family == "random":
        u = solvers.random_band_limited(s, seed, amplitude, band)
    elif family == "zonal":
        if s.kind != "sphere":
            raise ValueError("zonal fields need a sphere")
        rng = np.random.default_rng(seed)
        a = np.zeros((s.mmax + 1, s.lmax + 1), dtype=complex)
        a[0, 1:band + 1] = rng.normal(size=band)
        u = s.synthesis(a)
        u = amplitude * u / max(np.max(np.abs(u)), 1e-300)
    else:
        raise ValueError(f"unknown field family {family!r}")
    if degree is not None and psh_fraction is not None:
        neg = -np.min(ddc_values(s, u))
        if neg > psh_fraction * degree:
            u = u * (psh_fraction * degree / neg)
    return u


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ----------------------------------------------------------------------------
# Experiments
# ----------------------------------------------------------------------------

def exp_verify_mto(cfg: Config, threads: int) -> Result:
    spec = read_surface(cfg, ("sphere",))
    f = read_fields(cfg, count=100, amplitude=1.0)
    n_mob = cfg.int("mobius", "count", 10, lo=0, hi=1000)
    max_rap = cfg.float("mobius", "max_rapidity", 1.0, lo=0.0)
    cfg.check()
    s = build(spec)
    b = functionals.sphere_setup(s, 2)
    res = Result()

    def row(i):
        seed = f["seed"] + i
        u = make_field(s, f["family"], seed, f["amplitude"], f["band"])
        return {"id": i, "family": f["family"], "seed": seed, "margin": functionals.mto_margin(b, u)}

    rows = _pmap(row, range(f["count"]), threads)
    rng = np.random.default_rng(f["seed"] + 10_000)
    mob = [{"id": len(rows), "family": "constant", "seed": -1,
            "margin": functionals.mto_margin(b, np.zeros(s.shape))}]
    for k in range(n_mob):
        d = rng.normal(size=3)
        r = float(rng.uniform(0, max_rap))
        v = mobius_pullback(s, Potential(s, np.zeros(s.shape)), boost_matrix(d, r), 2)
        mob.append({"id": len(rows) + 1 + k, "family": "mobius", "seed": f["seed"] + 10_000,
                    "margin": functionals.mto_margin(b, v)})
    res.seeds = [r["seed"] for r in rows] + [f["seed"] + 10_000]
    res.tables["margins"] = rows + mob
    res.plots["margin_by_id"] = ([r["id"] for r in rows], [r["margin"] for r in rows], "id", "margin")
    res.summary = {"min_margin": min(r["margin"] for r in rows),
                   "max_abs_equality_margin": max(abs(r["margin"]) for r in mob)}
    return res


def exp_verify_fang(cfg: Config, threads: int) -> Result:
    spec = read_surface(cfg, ("sphere",), {"n_theta": 48, "n_phi": 96})
    m_max = cfg.int("bundle", "m_max", 8, lo=0, hi=24)
    f = read_fields(cfg, count=50, amplitude=0.5)
    cfg.check()
    s = build(spec)
    res = Result()
    rows = []
    for m in range(m_max + 1):
        b = functionals.sphere_setup(s, m + 2)

        def row(i, m=m, b=b):
            seed = f["seed"] + 1000 * m + i
            u = make_field(s, f["family"], seed, f["amplitude"], f["band"], m + 2, f["psh_fraction"])
            lhs, rhs, tm = torsion.fang_check(m, Potential(s, u), f"seed={seed}")
            return {"m": m, "seed": seed, "gram_margin": functionals.gram_bound_margin(b, u),
                    "torsion": lhs, "torsion_bound": rhs, "torsion_margin": tm}

        const = {"m": m, "seed": -1, "gram_margin": functionals.gram_bound_margin(b, np.full(s.shape, 0.7)),
                 "torsion_margin": torsion.fang_check(m, Potential(s, np.full(s.shape, 0.7)))[2]}
        rows.extend(_pmap(row, range(f["count"]), threads))
        rows.append(const)
        res.seeds.extend(f["seed"] + 1000 * m + i for i in range(f["count"]))
    res.tables["margins"] = rows
    per_m = [min(r["gram_margin"] for r in rows if r["m"] == m and r["seed"] >= 0) for m in range(m_max + 1)]
    res.plots["min_gram_margin_by_m"] = (list(range(m_max + 1)), per_m, "m", "min_margin")
    rnd = [r for r in rows if r["seed"] >= 0]
    res.summary = {"min_gram_margin": min(r["gram_margin"] for r in rnd),
                   "min_torsion_margin": min(r["torsion_margin"] for r in rnd),
                   "max_abs_constant_margin": max(max(abs(r["gram_margin"]), abs(r["torsion_margin"]))
                                                  for r in rows if r["seed"] < 0)}
    return res


def _zonal_pair(cfg: Config):
    fam0 = cfg.str("path", "u0_family", "zero", choices=("zero", "zonal"))
    fam1 = cfg.str("path", "u1_family", "zonal", choices=("zero", "zonal"))
    seed = cfg.seed("path", "seed", 0)
    amp = cfg.float("path", "amplitude", 0.5, lo=0.0)
    band = cfg.int("path", "band", 4, lo=1, hi=16)
    frac = cfg.float("path", "psh_fraction", 0.5, lo=0.0, hi=1.0)
    return fam0, fam1, seed, amp, band, frac


def exp_geodesic_profile(cfg: Config, threads: int) -> Result:
    spec = read_surface(cfg, ("sphere",), {"n_theta": 48, "n_phi": 96})
    V = cfg.int("bundle", "degree", 3, lo=2, hi=40)
    K = cfg.int("path", "n_times", 11, lo=5, hi=201)
    method = cfg.str("path", "method", "legendre", choices=("legendre", "envelope"))
    n_tau = cfg.int("path", "n_tau", 4097, lo=3)
    tol = cfg.float("solver", "tol", 1e-10, lo=0.0, strict_lo=True)
    pair = _zonal_pair(cfg)
    cfg.check()
    s = build(spec)
    b = functionals.sphere_setup(s, V)
    fam0, fam1, seed, amp, band, frac = pair
    u0 = make_field(s, fam0, seed, amp, band, V, frac)
    u1 = make_field(s, fam1, seed + 1, amp, band, V, frac)
    path = envelopes.geodesic(b, u0, u1, K=K, method=method, n_tau=n_tau, tol=tol)
    prof = envelopes.path_profile(b, path)
    res = Result(seeds=[seed, seed + 1])
    res.tables["profile"] = prof.rows()
    res.paths["path"] = (path, prof)
    for name in ("E", "L", "F", "J"):
        res.plots[f"{name}_vs_t"] = (list(prof.t), list(getattr(prof, name)), "t", name)
    res.summary = {"E_chord_deviation": prof.chord_deviation("E"),
                   "min_L_second_difference": float(prof.second_differences("L").min()),
                   "max_F_second_difference": float(prof.second_differences("F").max()),
                   "max_defect": float(np.nanmax(prof.defect)), "is_geodesic": path.is_geodesic}
    return res


def exp_envelope_tests(cfg: Config, threads: int) -> Result:
    spec = read_surface(cfg, ("sphere", "torus"), {"n_theta": 48, "n_phi": 96, "n": 64})
    V = cfg.int("bundle", "degree", 2, lo=1, hi=40)
    f = read_fields(cfg, count=20, amplitude=2.0)
    tol = cfg.float("solver", "tol", 1e-11, lo=0.0, strict_lo=True)
    cfg.check()
    s = build(spec)
    b = functionals.sphere_setup(s, V) if s.kind == "sphere" else functionals.torus_setup(s)
    res = Result()
    area = s.weights

    def row(i):
        seed = f["seed"] + i
        u = make_field(s, f["family"], seed, f["amplitude"], f["band"])
        pu = envelopes.project_psh(b, u, tol=tol)
        ppu = envelopes.project_psh(b, pu, tol=tol)
        u2 = u + make_field(s, "random", seed + 50_000, 0.5 * f["amplitude"], f["band"]) ** 2
        pu2 = envelopes.project_psh(b, u2, tol=tol)
        contact = float(np.sum(area * (u - pu.values) * envelopes.omega_h(b, pu)))
        return {"id": i, "seed": seed,
                "idempotence": float(np.max(np.abs(ppu.values - pu.values))),
                "monotonicity": float(np.max(pu.values - pu2.values)),
                "contact": contact,
                "F_u": envelopes.functional_F_h(b, u), "F_Pu": envelopes.functional_F_h(b, pu)}

    rows = _pmap(row, range(f["count"]), threads)
    for r in rows:
        r["F_gain"] = r["F_Pu"] - r["F_u"]
    res.seeds = [r["seed"] for r in rows]
    res.tables["projection"] = rows
    res.plots["F_gain_by_id"] = ([r["id"] for r in rows], [r["F_gain"] for r in rows], "id", "F_gain")
    res.summary = {"max_idempotence": max(r["idempotence"] for r in rows),
                   "max_monotonicity_violation": max(r["monotonicity"] for r in rows),
                   "max_abs_contact": max(abs(r["contact"]) for r in rows),
                   "min_F_gain": min(r["F_gain"] for r in rows)}
    return res


def exp_solve_critical(cfg: Config, threads: int) -> Result:
    spec = read_surface(cfg, ("sphere",), {"n_theta": 32, "n_phi": 64})
    V = cfg.int("bundle", "degree", 3, lo=2, hi=40)
    f = read_fields(cfg, count=10, amplitude=0.1)
    tol = cfg.float("solver", "tol", 1e-10, lo=0.0, strict_lo=True)
    max_iter = cfg.int("solver", "max_iter", 2000, lo=1)
    lmax = cfg.int("solver", "galerkin_lmax", 8, lo=2, hi=30)
    cfg.check()
    s = build(spec)
    b = functionals.sphere_setup(s, V)
    res = Result()

    def row(i):
        seed = f["seed"] + i
        u = make_field(s, f["family"], seed, f["amplitude"], f["band"], V, f["psh_fraction"])
        try:
            rep = solvers.solve_critical_sphere(b, u, tol=tol, max_iter=max_iter)
        except solvers.SolverError as exc:
            return {"id": i, "seed": seed, "converged": False, "error": str(exc)}
        return {"id": i, "seed": seed, "converged": rep.converged, "residual": rep.residual,
                "iterations": rep.iterations, "F": rep.extra["F"],
                "max_abs_solution": float(np.max(np.abs(rep.solution.values)))}

    rows = _pmap(row, range(f["count"]), threads)
    res.failed = [f"start {r['id']} did not converge" for r in rows if not r["converged"]]
    eig = solvers.linearization_min_eig(b, np.zeros(s.shape), n_eigs=6, lmax=lmax)
    res.seeds = [r["seed"] for r in rows]
    res.tables["starts"] = rows
    res.tables["linearization"] = [{"index": i, "eigenvalue": e} for i, e in enumerate(eig)]
    res.plots["eigenvalues"] = (list(range(len(eig))), eig, "index", "eigenvalue")
    ok = [r for r in rows if r["converged"]]
    res.summary = {"n_converged": len(ok), "max_residual": max((r["residual"] for r in ok), default=None),
                   "max_abs_F": max((abs(r["F"]) for r in ok), default=None),
                   "eigenvalues": eig, "fs_gap": 12.0 / (V * (V + 1))}
    return res


def exp_mean_field_continuation(cfg: Config, threads: int) -> Result:
    spec = read_surface(cfg, ("torus",), {"n": 128})
    etas = cfg.floats("continuation", "eta_over_4pi", "0.25, 0.5, 0.75, 1.0, 1.25, 1.5")
    mode = cfg.str("continuation", "mode", "i", choices=("i", "ii", "q"))
    pi = cfg.int("bundle", "point_index_1", 0, lo=0)
    pj = cfg.int("bundle", "point_index_2", 0, lo=0)
    tol = cfg.float("solver", "tol", 1e-11, lo=0.0, strict_lo=True)
    halt = cfg.str("continuation", "halt_on_failure", "yes", choices=("yes", "no"))
    if etas is not None and any(e <= 0 or e >= 2 for e in etas):
        cfg.problems.append("[continuation] eta_over_4pi: entries must lie in (0, 2)")
    cfg.check()
    s = build(spec)
    p_idx = (pi % s.n, pj % s.n)
    grid = [4 * np.pi * e for e in etas]
    reps = solvers.continuation_in_eta(s, p_idx, grid, tol=tol, mode=mode, halt_on_failure=(halt == "yes"))
    res = Result()
    rows = []
    for r in reps:
        rows.append({"eta_over_4pi": r.extra["eta"] / (4 * np.pi), "eta": r.extra["eta"], "residual": r.residual,
                     "min_eig": r.extra.get("min_eig", float("nan")), "iterations": r.iterations,
                     "converged": r.converged, "mass": r.extra.get("mass", float("nan"))})
    res.tables["continuation"] = rows
    res.records["reports"] = [dict(r.record(), point_index=list(p_idx)) for r in reps]
    res.plots["min_eig_vs_eta"] = ([r["eta_over_4pi"] for r in rows], [r["min_eig"] for r in rows],
                                   "eta_over_4pi", "min_eig")
    res.failed = [f"eta/4pi={r['eta_over_4pi']!r} failed" for r in rows if not r["converged"]]
    res.summary = {"max_eta_over_4pi_reached": max((r["eta_over_4pi"] for r in rows if r["converged"]),
                                                   default=None),
                   "all_converged": all(r["converged"] for r in rows)}
    return res


def exp_coulomb_mc(cfg: Config, threads: int) -> Result:
    spec = read_surface(cfg, ("sphere",), {"n_theta": 32, "n_phi": 64})
    ms = cfg.ints("bundle", "m_values", "0, 1, 2, 3, 4")
    n_samples = cfg.int("sampler", "n_samples", 4000, lo=1000)
    f = read_fields(cfg, count=1, amplitude=0.3)
    cfg.check()
    s = build(spec)
    res = Result()
    rows = []
    for m in ms:
        b = functionals.sphere_setup(s, m + 2)
        for i in range(f["count"]):
            seed = f["seed"] + 100 * m + i
            u = make_field(s, f["family"], seed, f["amplitude"], f["band"])
            mc = bergman.mc_estimate_L(b, u, n_samples, seed)
            L = functionals.functional_L(b, u)
            z = (mc["estimate"] - L) / mc["stderr"] if mc["stderr"] > 0 else 0.0
            rows.append({"m": m, "N": b.N, "seed": seed, "L_gram": L, "L_mc": mc["estimate"],
                         "stderr": mc["stderr"], "z_score": z, "acceptance": mc["acceptance"]})
            res.seeds.append(seed)
    res.tables["estimates"] = rows
    res.plots["z_by_m"] = ([r["m"] for r in rows], [r["z_score"] for r in rows], "m", "z_score")
    res.summary = {"max_abs_z": max(abs(r["z_score"]) for r in rows)}
    return res


def exp_torsion_table(cfg: Config, threads: int) -> Result:
    spec = read_surface(cfg, ("sphere", "torus"), {"n_theta": 48, "n_phi": 96, "n": 64})
    degrees = cfg.ints("bundle", "degrees", "2, 3, 4")
    f = read_fields(cfg, count=5, amplitude=0.3)
    cfg.check()
    s = build(spec)
    res = Result()
    recs = []
    setups = ([functionals.sphere_setup(s, V) for V in degrees] if s.kind == "sphere"
              else [functionals.torus_setup(s)])
    for b in setups:
        for i in range(f["count"]):
            seed = f["seed"] + i
            u = make_field(s, f["family"], seed, f["amplitude"], f["band"], b.V, f["psh_fraction"])
            rec = torsion.relative_torsion(b, u, f"seed={seed}")
            recs.append(rec.as_dict())
            res.seeds.append(seed)
    res.tables["torsion"] = recs
    res.records["torsion"] = recs
    res.plots["torsion_by_row"] = (list(range(len(recs))), [r["relative_torsion"] for r in recs],
                                   "row", "relative_torsion")
    res.summary = {"max_recompute_error": max(abs(r["j_term"] + r["nf_term"] - r["relative_torsion"])
                                              for r in recs)}
    return res


def exp_entropy_ladder(cfg: Config, threads: int) -> Result:
    spec = read_surface(cfg, ("sphere",), {"n_theta": 32, "n_phi": 64})
    V = cfg.int("bundle", "degree", 2, lo=2, hi=16)
    ks = cfg.ints("ladder", "k_values", "1, 2, 4, 8, 16")
    order = cfg.int("ladder", "extrapolation_order", 2, lo=0, hi=4)
    f = read_fields(cfg, count=1, amplitude=0.2, family="zonal")
    cfg.check()
    s = build(spec)
    b = functionals.sphere_setup(s, V)
    u = make_field(s, f["family"], f["seed"], f["amplitude"], f["band"], V, f["psh_fraction"])
    try:
        lad = torsion.entropy_ladder(b, Potential(s, u), ks, order=order)
    except ValueError as exc:
        raise ConfigError([f"[ladder] k_values: {exc}"]) from None
    res = Result(seeds=[f["seed"]])
    res.tables["ladder"] = lad["rows"]
    good = [r for r in lad["rows"] if "scaled" in r]
    res.plots["scaled_vs_k"] = ([r["k"] for r in good], [r["scaled"] for r in good], "k", "scaled_torsion")
    res.summary = {"target": lad["target"], "limit": lad["limit"], "gap": lad["gap"]}
    return res


def exp_hormander_check(cfg: Config, threads: int) -> Result:
    spec = read_surface(cfg, ("sphere",), {"n_theta": 48, "n_phi": 96})
    V = cfg.int("bundle", "degree", 4, lo=2, hi=20)
    K = cfg.int("solver", "truncation_degree", 6, lo=1, hi=20)
    f = read_fields(cfg, count=20, amplitude=0.1)
    cfg.check()
    s = build(spec)
    b = functionals.sphere_setup(s, V)
    res = Result()

    def row(i):
        seed = f["seed"] + i
        rng = np.random.default_rng(seed)
        h = rng.normal(size=V + 1) + 1j * rng.normal(size=V + 1)
        gh = bergman.holomorphic_quotient_data(b, h)
        if i == 0:
            u = np.zeros(s.shape)
        else:
            u = make_field(s, f["family"], seed, f["amplitude"], f["band"], V, f["psh_fraction"])
        out = bergman.dbar_minimal(b, u, gh, K=K)
        return {"id": i, "seed": seed, "norm_alpha": out["norm_alpha"], "norm_g": out["norm_g"],
                "ratio": out["norm_alpha"] / out["norm_g"], "fit_residual": out["fit_residual"],
                "equality_case": i == 0}

    rows = _pmap(row, range(f["count"]), threads)
    res.seeds = [r["seed"] for r in rows]
    res.tables["hormander"] = rows
    res.plots["ratio_by_id"] = ([r["id"] for r in rows], [r["ratio"] for r in rows], "id", "ratio")
    res.summary = {"max_ratio": max(r["ratio"] for r in rows),
                   "equality_defect": abs(rows[0]["ratio"] - 1.0),
                   "max_fit_residual": max(r["fit_residual"] for r in rows)}
    return res


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    run: object

    def keys(self) -> dict:
        """Config keys read by the experiment, with their defaults."""
        cfg = Config.from_text(f"[experiment]\nname = {self.name}\n")
        cfg.dry = True
        try:
            self.run(cfg, 1)
        except _DryRun:
            pass
        return cfg.used


REGISTRY = {e.name: e for e in (
    Experiment("coulomb-mc", "Monte-Carlo estimate of L under the Coulomb process against the Gram value",
               exp_coulomb_mc),
    Experiment("entropy-ladder", "scaled torsion of O(kV) with metric exp(-ku) against -S(u)", exp_entropy_ladder),
    Experiment("envelope-tests", "psh projection: idempotence, monotonicity, contact, F(u) <= F(Pu)",
               exp_envelope_tests),
    Experiment("geodesic-profile", "E, J, L, F and geodesic defect along a zonal geodesic", exp_geodesic_profile),
    Experiment("hormander-check", "minimal d-bar solutions against the L2 estimate", exp_hormander_check),
    Experiment("mean-field-continuation", "torus mean-field solutions along eta with min eigenvalues",
               exp_mean_field_continuation),
    Experiment("solve-critical", "critical points of F on the sphere from perturbed starts", exp_solve_critical),
    Experiment("torsion-table", "relative torsion split into J and N F terms", exp_torsion_table),
    Experiment("verify-fang", "Gram and torsion bounds for O(m), m = 0..m_max", exp_verify_fang),
    Experiment("verify-mto", "sharp exponential inequality on random fields and Mobius orbits", exp_verify_mto),
)}


def list_experiments() -> list[Experiment]:
    return [REGISTRY[k] for k in sorted(REGISTRY)]
