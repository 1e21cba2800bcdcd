"""File formats.

Potentials and densities: a columnar text file (node index, value) with a
one-line header, and a binary dump with a fixed header followed by
little-endian float64 values.  Paths are directories of binary potentials
plus a diagnostics CSV.  Tables are CSV with a header row and full double
precision; records are JSON lines.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .surface import Density, Potential, Surface, build_sphere, build_torus

MAGIC = b"EXTRML01"
_HEADER = struct.Struct("<8sBBIIdd d")  # magic, object kind, surface kind, sizes, tau, total mass
_OBJ = {"potential": 0, "density": 1}
_SURF = {"sphere": 0, "torus": 1}


def _surface_sizes(s: Surface):
    if s.kind == "sphere":
        return s.n_theta, s.n_phi, 0.0, 0.0
    return s.n, s.n, s.tau.real, s.tau.imag


def _surface_from(kind: str, n1: int, n2: int, tau_re: float, tau_im: float) -> Surface:
    if kind == "sphere":
        return build_sphere(n1, n2)
    return build_torus(complex(tau_re, tau_im), n1)


def _fmt(x: float) -> str:
    return repr(float(x))


# ----------------------------------------------------------------------------
# Potentials and densities
# ----------------------------------------------------------------------------

def write_text(path, obj) -> None:
    s = obj.surface
    n1, n2, tr, ti = _surface_sizes(s)
    kind = "density" if isinstance(obj, Density) else "potential"
    head = f"# {kind} {s.kind} {n1} {n2} {_fmt(tr)} {_fmt(ti)}"
    if kind == "density":
        head += f" {_fmt(obj.total_mass)}"
    with open(path, "w") as fh:
        fh.write(head + "\n")
        for i, v in enumerate(np.asarray(obj.values, dtype=float).ravel()):
            fh.write(f"{i} {_fmt(v)}\n")


def read_text(path, surface: Surface | None = None):
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) < 7 or head[0] != "#":
            raise ValueError(f"{path}: missing header line")
        kind, skind = head[1], head[2]
        n1, n2, tr, ti = int(head[3]), int(head[4]), float(head[5]), float(head[6])
        data = np.loadtxt(fh, ndmin=2)
    s = surface or _surface_from(skind, n1, n2, tr, ti)
    idx = data[:, 0].astype(int)
    if not np.array_equal(idx, np.arange(s.n_nodes)):
        raise ValueError(f"{path}: node indices do not match the surface")
    vals = data[:, 1].reshape(s.shape)
    if kind == "density":
        return Density(s, vals)
    return Potential(s, vals)


def write_binary(path, obj) -> None:
    s = obj.surface
    n1, n2, tr, ti = _surface_sizes(s)
    kind = "density" if isinstance(obj, Density) else "potential"
    mass = float(obj.total_mass) if kind == "density" else 0.0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, _OBJ[kind], _SURF[s.kind], n1, n2, tr, ti, mass))
        fh.write(np.ascontiguousarray(obj.values, dtype="<f8").tobytes())


def read_binary(path, surface: Surface | None = None):
    raw = Path(path).read_bytes()
    magic, ok, sk, n1, n2, tr, ti, _mass = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not an extremal binary file")
    skind = {v: k for k, v in _SURF.items()}[sk]
    s = surface or _surface_from(skind, n1, n2, tr, ti)
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(s.shape).copy()
    if ok == _OBJ["density"]:
        return Density(s, vals)
    return Potential(s, vals)


# ----------------------------------------------------------------------------
# Tables
# ----------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> None:
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_jsonl(path, records: list[dict]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(_jsonable(r), sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_plot_data(path, x, y, xlabel: str = "x", ylabel: str = "y") -> None:
    write_csv(path, [{xlabel: a, ylabel: b} for a, b in zip(x, y)], [xlabel, ylabel])


# ----------------------------------------------------------------------------
# Paths, reports, continuation tables
# ----------------------------------------------------------------------------

def write_metric_path(directory, path, profile=None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for k, pot in enumerate(path.potentials):
        name = f"u_{k:04d}.bin"
        write_binary(d / name, pot)
        files.append(name)
    meta = {"times": [float(t) for t in path.times], "files": files, "method": path.method,
            "is_subgeodesic": path.is_subgeodesic, "is_geodesic": path.is_geodesic, "meta": path.meta}
    (d / "path.json").write_text(json.dumps(_jsonable(meta), indent=1, sort_keys=True))
    if profile is not None:
        write_csv(d / "diagnostics.csv", profile.rows())
    else:
        rows = [{"t": float(t)} for t in path.times]
        for key, vals in path.diagnostics.items():
            for r, v in zip(rows, vals):
                r[key] = float(v)
        write_csv(d / "diagnostics.csv", rows)


def read_metric_path(directory):
    from .envelopes import MetricPath

    d = Path(directory)
    meta = json.loads((d / "path.json").read_text())
    pots = []
    surf = None
    for name in meta["files"]:
        p = read_binary(d / name, surf)
        surf = p.surface
        pots.append(p)
    path = MetricPath(np.array(meta["times"]), pots, method=meta["method"],
                      is_subgeodesic=meta["is_subgeodesic"], is_geodesic=meta["is_geodesic"], meta=meta["meta"])
    diag = d / "diagnostics.csv"
    if diag.exists():
        rows = read_csv(diag)
        for key in rows[0] if rows else []:
            if key != "t":
                path.diagnostics[key] = np.array([float(r[key]) for r in rows])
    return path


def write_solve_report(path, report, solution_file: str | None = None) -> None:
    """JSON record; the solution is stored next to it as a binary potential."""
    p = Path(path)
    sol = solution_file or p.with_suffix(".bin").name
    write_binary(p.parent / sol, report.solution)
    rec = report.record()
    rec["solution_file"] = sol
    rec["history"] = [float(h) for h in report.history]
    p.write_text(json.dumps(_jsonable(rec), sort_keys=True) + "\n")


def read_solve_report(path):
    from .solvers import SolveReport

    p = Path(path)
    rec = json.loads(p.read_text())
    sol = read_binary(p.parent / rec.pop("solution_file"))
    keys = ("residual", "iterations", "converged", "gauge", "history", "pairwise_max_distance")
    base = {k: rec.pop(k) for k in keys if k in rec}
    return SolveReport(sol, base["residual"], base["iterations"], base["converged"], base.get("gauge", ""),
                       base.get("history", []), rec, base.get("pairwise_max_distance"))


def write_continuation_csv(path, reports) -> None:
    rows = []
    for r in reports:
        rows.append({"eta": r.extra.get("eta"), "residual": r.residual,
                     "min_eig": r.extra.get("min_eig", float("nan")), "iterations": r.iterations})
    write_csv(path, rows, ["eta", "residual", "min_eig", "iterations"])
