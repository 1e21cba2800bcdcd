"""Command line: ``extremal list`` and ``extremal run <config>``.

Exit status is 0 on success, 2 for config problems (nothing is written)
and 3 when a numerical step fails (partial artifacts are kept).
"""
from __future__ import annotations

import argparse
import contextlib
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, io, kernels
from .experiments import REGISTRY, Config, ConfigError, _DryRun, list_experiments

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def format_list() -> str:
    lines = []
    for e in list_experiments():
        lines.append(f"{e.name:<26}{e.description}")
        lines.append(f"{'':<26}required: [experiment] name")
        for sec, kv in e.keys().items():
            opts = ", ".join(f"{k}={v}" for k, v in kv.items())
            lines.append(f"{'':<26}[{sec}] {opts}")
    return "\n".join(lines)


def _blas_limit():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(1)  # row-level parallelism only, so results do not depend on --threads


def _manifest(name, text, cfg, res, out, threads):
    return {
        "experiment": name,
        "config_text": text,
        "resolved_config": cfg.used,
        "seeds": res.seeds if res else [],
        "seed_override": cfg.seed_override,
        "threads": threads,
        "versions": {"extremal": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "kernel_backend": kernels.BACKEND},
        "outputs": sorted(p.name for p in out.iterdir()),
    }


def write_result(out: Path, res) -> None:
    for name, rows in res.tables.items():
        io.write_csv(out / f"{name}.csv", rows)
    for name, recs in res.records.items():
        io.write_jsonl(out / f"{name}.jsonl", recs)
    for name, (x, y, xl, yl) in res.plots.items():
        io.write_plot_data(out / f"plot_{name}.csv", x, y, xl, yl)
    for name, (path, prof) in res.paths.items():
        io.write_metric_path(out / name, path, prof)
    (out / "summary.json").write_text(json.dumps(io._jsonable(res.summary), indent=1, sort_keys=True) + "\n")


def run(config_path, output_dir=None, threads: int = 1, seed_override=None, stream=None) -> int:
    stream = stream or sys.stderr
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=stream)
        return EXIT_CONFIG
    try:
        cfg = Config.from_text(text, seed_override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stream)
        return EXIT_CONFIG
    name = cfg.str("experiment", "name")
    if name is not None and name not in REGISTRY:
        cfg.problems.append(f"[experiment] name: unknown experiment {name!r} "
                            f"(known: {', '.join(sorted(REGISTRY))})")
    out_raw = cfg.str("output", "dir", f"runs/{name}")
    if threads < 1:
        cfg.problems.append(f"--threads: must be >= 1 (got {threads})")
    if cfg.problems:
        for p in cfg.problems:
            print(f"config error: {p}", file=stream)
        return EXIT_CONFIG
    exp = REGISTRY[name]
    out = Path(output_dir) if output_dir is not None else Path(out_raw)

    # validate everything before touching the filesystem
    dry = Config(cfg.parser, seed_override)
    dry.dry = True
    try:
        exp.run(dry, threads)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=stream)
        return EXIT_CONFIG
    except _DryRun:
        pass

    status = EXIT_OK
    res = None
    with _blas_limit():
        try:
            res = exp.run(cfg, threads)
        except ConfigError as exc:
            for p in exc.problems:
                print(f"config error: {p}", file=stream)
            return EXIT_CONFIG
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            print(f"numerical failure: {exc}", file=stream)
            status = EXIT_NUMERICAL
    out.mkdir(parents=True, exist_ok=True)
    if res is not None:
        write_result(out, res)
        if res.failed:
            for msg in res.failed:
                print(f"numerical failure: {msg}", file=stream)
            status = EXIT_NUMERICAL
    manifest = _manifest(name, text, cfg, res, out, threads)
    manifest["exit_status"] = status
    (out / "manifest.json").write_text(json.dumps(io._jsonable(manifest), indent=1, sort_keys=True) + "\n")
    if res is not None:
        print(json.dumps(io._jsonable(res.summary), sort_keys=True))
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="extremal", description="desk-scale experiments on curves")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list experiments with their config keys")
    rp = sub.add_parser("run", help="run an experiment from an INI config")
    rp.add_argument("config")
    rp.add_argument("--output-dir", default=None)
    rp.add_argument("--threads", type=int, default=1)
    rp.add_argument("--seed-override", type=int, default=None)
    args = ap.parse_args(argv)
    if args.command == "list":
        print(format_list())
        return EXIT_OK
    return run(args.config, args.output_dir, args.threads, args.seed_override)


if __name__ == "__main__":
    sys.exit(main())
