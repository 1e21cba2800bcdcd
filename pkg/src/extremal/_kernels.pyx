# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: projected SOR sweeps and the Coulomb-gas Metropolis chain."""
from libc.math cimport sqrt, cos, sin, log, exp, fabs, INFINITY


def pgs_sweeps(double[::1] w, const double[::1] q, const long[::1] indptr,
               const long[::1] indices, const double[::1] data,
               const double[::1] diag, double omega, long n_sweeps):
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t i, k, sweep
    cdef double r, new, d, change = 0.0
    for sweep in range(n_sweeps):
        change = 0.0
        for i in range(n):
            r = q[i]
            for k in range(indptr[i], indptr[i + 1]):
                r += data[k] * w[indices[k]]
            new = w[i] - omega * r / diag[i]
            if new < 0.0:
                new = 0.0
            d = fabs(new - w[i])
            if d > change:
                change = d
            w[i] = new
    return change


def metropolis_sphere(double[:, ::1] x, const double[:, ::1] gauss,
                      const double[::1] angles, const double[::1] unif,
                      double[:, :, ::1] out):
    cdef Py_ssize_t N = x.shape[0]
    cdef Py_ssize_t T = gauss.shape[0]
    cdef Py_ssize_t n_out = out.shape[0]
    cdef Py_ssize_t t, i, j, rec = 0
    cdef long accepted = 0
    cdef double xi0, xi1, xi2, g0, g1, g2, dot, e0, e1, e2, en, c, s
    cdef double y0, y1, y2, yn, logr, a0, a1, a2, b0, b1, b2, na, nb
    for t in range(T):
        i = t % N
        xi0 = x[i, 0]; xi1 = x[i, 1]; xi2 = x[i, 2]
        g0 = gauss[t, 0]; g1 = gauss[t, 1]; g2 = gauss[t, 2]
        dot = g0 * xi0 + g1 * xi1 + g2 * xi2
        e0 = g0 - dot * xi0; e1 = g1 - dot * xi1; e2 = g2 - dot * xi2
        en = sqrt(e0 * e0 + e1 * e1 + e2 * e2)
        if en > 0.0:
            c = cos(angles[t])
            s = sin(angles[t]) / en
            y0 = c * xi0 + s * e0; y1 = c * xi1 + s * e1; y2 = c * xi2 + s * e2
            yn = sqrt(y0 * y0 + y1 * y1 + y2 * y2)
            y0 = y0 / yn; y1 = y1 / yn; y2 = y2 / yn
            logr = 0.0
            for j in range(N):
                if j == i:
                    continue
                a0 = y0 - x[j, 0]; a1 = y1 - x[j, 1]; a2 = y2 - x[j, 2]
                b0 = xi0 - x[j, 0]; b1 = xi1 - x[j, 1]; b2 = xi2 - x[j, 2]
                na = a0 * a0 + a1 * a1 + a2 * a2
                nb = b0 * b0 + b1 * b1 + b2 * b2
                if na == 0.0:
                    logr = -INFINITY
                    break
                logr += log(na) - log(nb)
            if logr >= 0.0 or unif[t] < exp(logr):
                x[i, 0] = y0; x[i, 1] = y1; x[i, 2] = y2
                accepted += 1
        if i == N - 1 and rec < n_out:
            for j in range(N):
                out[rec, j, 0] = x[j, 0]; out[rec, j, 1] = x[j, 1]; out[rec, j, 2] = x[j, 2]
            rec += 1
    return accepted
