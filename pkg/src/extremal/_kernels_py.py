"""Pure-Python versions of the compiled inner loops."""
import math


def pgs_sweeps(w, q, indptr, indices, data, diag, omega, n_sweeps):
    """Projected SOR sweeps for min(w, A w + q) = 0 with A in CSR form.

    Updates w in place and returns the largest change in the last sweep.
    """
    n = w.shape[0]
    change = 0.0
    for _ in range(n_sweeps):
        change = 0.0
        for i in range(n):
            r = q[i]
            for k in range(indptr[i], indptr[i + 1]):
                r += data[k] * w[indices[k]]
            new = w[i] - omega * r / diag[i]
            if new < 0.0:
                new = 0.0
            d = abs(new - w[i])
            if d > change:
                change = d
            w[i] = new
    return change


def metropolis_sphere(x, gauss, angles, unif, out):
    """Single-site Metropolis moves for prod_{i<j} |x_i - x_j|^2 on (S^2)^N.

    Move t rotates point t mod N by angles[t] towards the tangent projection
    of gauss[t].  After each full sweep the configuration is copied into out
    while rows remain.  Returns the number of accepted moves.
    """
    N = x.shape[0]
    T = gauss.shape[0]
    accepted = 0
    rec = 0
    n_out = out.shape[0]
    for t in range(T):
        i = t % N
        xi0, xi1, xi2 = x[i, 0], x[i, 1], x[i, 2]
        g0, g1, g2 = gauss[t, 0], gauss[t, 1], gauss[t, 2]
        dot = g0 * xi0 + g1 * xi1 + g2 * xi2
        e0, e1, e2 = g0 - dot * xi0, g1 - dot * xi1, g2 - dot * xi2
        en = math.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
        if en > 0.0:
            c = math.cos(angles[t])
            s = math.sin(angles[t]) / en
            y0, y1, y2 = c * xi0 + s * e0, c * xi1 + s * e1, c * xi2 + s * e2
            yn = math.sqrt(y0 * y0 + y1 * y1 + y2 * y2)
            y0, y1, y2 = y0 / yn, y1 / yn, y2 / yn
            logr = 0.0
            for j in range(N):
                if j == i:
                    continue
                a0, a1, a2 = y0 - x[j, 0], y1 - x[j, 1], y2 - x[j, 2]
                b0, b1, b2 = xi0 - x[j, 0], xi1 - x[j, 1], xi2 - x[j, 2]
                na = a0 * a0 + a1 * a1 + a2 * a2
                nb = b0 * b0 + b1 * b1 + b2 * b2
                if na == 0.0:
                    logr = -math.inf
                    break
                logr += math.log(na) - math.log(nb)
            if logr >= 0.0 or unif[t] < math.exp(logr):
                x[i, 0], x[i, 1], x[i, 2] = y0, y1, y2
                accepted += 1
        if i == N - 1 and rec < n_out:
            out[rec] = x
            rec += 1
    return accepted
