import os
import subprocess
import sys

import numpy as np
import pytest

from extremal import _kernels_py, kernels
from extremal.envelopes import stiffness
from extremal.surface import build_sphere

_kernels = pytest.importorskip("extremal._kernels")


def test_pgs_parity():
    s = build_sphere(16, 32)
    M = stiffness(s)
    q = np.random.default_rng(0).normal(size=M.shape[0]) * s.weights.ravel()
    args = (M.indptr.astype(np.int64), M.indices.astype(np.int64), M.data, M.diagonal().copy(), 1.5, 7)
    out = []
    for impl in (_kernels_py, _kernels):
        w = np.zeros(M.shape[0])
        impl.pgs_sweeps(w, q, *args)
        out.append(w)
    assert np.min(out[0]) >= 0
    assert np.max(np.abs(out[0] - out[1])) < 1e-13


def test_metropolis_parity():
    rng = np.random.default_rng(1)
    N, sweeps = 4, 50
    x0 = rng.normal(size=(N, 3))
    x0 /= np.linalg.norm(x0, axis=1, keepdims=True)
    T = N * sweeps
    draws = (rng.normal(size=(T, 3)), 0.3 * rng.normal(size=T), rng.random(T))
    out = []
    for impl in (_kernels_py, _kernels):
        res = np.empty((sweeps, N, 3))
        impl.metropolis_sphere(x0.copy(), *draws, res)
        out.append(res)
    assert np.allclose(np.linalg.norm(out[0], axis=2), 1.0, atol=1e-12)
    assert np.max(np.abs(out[0] - out[1])) < 1e-12


def test_backend_selection():
    assert kernels.BACKEND == "compiled"
    env = dict(os.environ, EXTREMAL_PURE_PYTHON="1")
    got = subprocess.run([sys.executable, "-c", "from extremal import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert got == "python"
