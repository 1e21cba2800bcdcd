"""Compiled kernels against their pure-Python versions.

    python benchmarks/bench_kernels.py [--repeat 3]

Both backends get identical inputs; outputs are compared before timing is
reported.
"""
import argparse
import time

import numpy as np

from extremal import _kernels_py
from extremal.envelopes import stiffness
from extremal.surface import build_sphere

try:
    from extremal import _kernels
except ImportError:
    _kernels = None


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_pgs(impl, n_theta, repeat):
    s = build_sphere(n_theta, 2 * n_theta)
    M = stiffness(s)
    rng = np.random.default_rng(0)
    q = rng.normal(size=M.shape[0]) * s.weights.ravel()
    args = (M.indptr.astype(np.int64), M.indices.astype(np.int64), M.data, M.diagonal().copy(), 1.5, 10)

    def run():
        w = np.zeros(M.shape[0])
        impl.pgs_sweeps(w, q, *args)
        return w

    return _best(run, repeat)


def bench_metropolis(impl, N, n_sweeps, repeat):
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=(N, 3))
    x0 /= np.linalg.norm(x0, axis=1, keepdims=True)
    T = N * n_sweeps
    gauss = rng.normal(size=(T, 3))
    angles = 0.3 * rng.normal(size=T)
    unif = rng.random(T)

    def run():
        x = x0.copy()
        out = np.empty((n_sweeps, N, 3))
        impl.metropolis_sphere(x, gauss, angles, unif, out)
        return out

    return _best(run, repeat)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the Python backend is available")
        return
    cases = [
        ("pgs_sweeps 32x64, 10 sweeps", lambda m: bench_pgs(m, 32, args.repeat)),
        ("pgs_sweeps 64x128, 10 sweeps", lambda m: bench_pgs(m, 64, args.repeat)),
        ("metropolis N=5, 2000 sweeps", lambda m: bench_metropolis(m, 5, 2000, args.repeat)),
        ("metropolis N=20, 500 sweeps", lambda m: bench_metropolis(m, 20, 500, args.repeat)),
    ]
    print(f"{'case':<32}{'python s':>12}{'compiled s':>12}{'speedup':>10}{'max diff':>12}")
    for name, fn in cases:
        tp, op = fn(_kernels_py)
        tc, oc = fn(_kernels)
        diff = float(np.max(np.abs(op - oc)))
        print(f"{name:<32}{tp:>12.4f}{tc:>12.5f}{tp / tc:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
