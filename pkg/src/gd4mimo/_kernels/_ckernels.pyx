# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Same contracts as ``_pykernels``: identical signatures, identical
random-uniform consumption order, identical tie-breaking. Floating-point
results may differ from the NumPy path by rounding only (different
summation orders, libm vs vectorized exp).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, rint

cnp.import_array()

BACKEND = "cython"


cdef inline long _clamp_level(double c, long levels) noexcept:
    cdef long v = <long> rint(c)
    if v < 1:
        v = 1
    if v > levels:
        v = levels
    return v


def babai_nearest(R, ybar, levels):
    """Box-constrained Babai point by back-substitution."""
    cdef const double[:, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(ybar, dtype=np.float64)
    cdef long lev = levels
    cdef Py_ssize_t n = Rv.shape[0]
    out = np.zeros(n, dtype=np.int64)
    cdef long[::1] x = out
    cdef Py_ssize_t i, j
    cdef double c
    for i in range(n - 1, -1, -1):
        c = yv[i]
        for j in range(i + 1, n):
            c -= Rv[i, j] * x[j]
        c /= Rv[i, i]
        x[i] = _clamp_level(c, lev)
    return out


def klein_samples(R, ybar, levels, sigma, U):
    """Randomized Klein-Babai samples; U[s, i] is consumed at level i."""
    cdef const double[:, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(ybar, dtype=np.float64)
    cdef const double[:, ::1] Uv = np.ascontiguousarray(U, dtype=np.float64)
    cdef long lev = levels
    cdef double sig = sigma
    cdef Py_ssize_t n = Rv.shape[0]
    cdef Py_ssize_t n_samples = Uv.shape[0]
    out = np.zeros((n_samples, n), dtype=np.int64)
    cdef long[:, ::1] xs = out
    cdef bint deterministic = sig <= 1e-9
    buf = np.empty(lev, dtype=np.float64)
    cdef double[::1] cdf = buf
    cdef Py_ssize_t s, i, j, v
    cdef double c, diff, z, zmin, acc, target
    cdef long count
    for s in range(n_samples):
        for i in range(n - 1, -1, -1):
            c = yv[i]
            for j in range(i + 1, n):
                c -= Rv[i, j] * xs[s, j]
            c /= Rv[i, i]
            if deterministic:
                xs[s, i] = _clamp_level(c, lev)
                continue
            zmin = 0.0
            for v in range(lev):
                diff = Rv[i, i] * ((v + 1) - c)
                z = diff * diff / (2.0 * sig * sig)
                cdf[v] = z
                if v == 0 or z < zmin:
                    zmin = z
            acc = 0.0
            for v in range(lev):
                acc += exp(-(cdf[v] - zmin))
                cdf[v] = acc
            target = Uv[s, i] * cdf[lev - 1]
            count = 0
            for v in range(lev):
                if cdf[v] <= target:
                    count += 1
                else:
                    break
            if count >= lev:
                count = lev - 1
            xs[s, i] = 1 + count
    return out


def brute_force(H, y, levels):
    """Exhaustive integer least squares over {1, ..., levels}^n.

    Candidates are visited in lexicographic order (last coordinate
    fastest); strict improvement keeps the first optimum.
    """
    cdef const double[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef long lev = levels
    cdef Py_ssize_t m = Hv.shape[0]
    cdef Py_ssize_t n = Hv.shape[1]
    cdef long total = 1
    cdef Py_ssize_t i, j
    for i in range(n):
        total *= lev
    cur_arr = np.ones(n, dtype=np.int64)
    best_arr = np.ones(n, dtype=np.int64)
    cdef long[::1] cur = cur_arr
    cdef long[::1] best = best_arr
    cdef double best_res = np.inf
    cdef double res, d
    cdef long count
    cdef Py_ssize_t pos
    for count in range(total):
        res = 0.0
        for i in range(m):
            d = yv[i]
            for j in range(n):
                d -= Hv[i, j] * cur[j]
            res += d * d
        if res < best_res:
            best_res = res
            for j in range(n):
                best[j] = cur[j]
        # Odometer increment, last coordinate fastest.
        pos = n - 1
        while pos >= 0:
            cur[pos] += 1
            if cur[pos] <= lev:
                break
            cur[pos] = 1
            pos -= 1
    return best_arr, best_res, total


def mp_forward(V0, E0, tproj, Wr, br, W3, b3, W4, b4, literal_gate):
    """Run the gated message-passing layer stack on one instance.

    V0: (n, D), E0: (n, n, D), tproj: (L, D), Wr: (L, D, 3D),
    W3/W4: (L, D, D). Returns the final node embeddings (n, D).
    """
    cdef double[:, ::1] V = np.array(V0, dtype=np.float64, order="C")
    cdef double[:, :, ::1] E = np.array(E0, dtype=np.float64, order="C")
    cdef const double[:, ::1] tp = np.ascontiguousarray(tproj, dtype=np.float64)
    cdef const double[:, :, ::1] Wrv = np.ascontiguousarray(Wr, dtype=np.float64)
    cdef const double[:, ::1] brv = np.ascontiguousarray(br, dtype=np.float64)
    cdef const double[:, :, ::1] W3v = np.ascontiguousarray(W3, dtype=np.float64)
    cdef const double[:, ::1] b3v = np.ascontiguousarray(b3, dtype=np.float64)
    cdef const double[:, :, ::1] W4v = np.ascontiguousarray(W4, dtype=np.float64)
    cdef const double[:, ::1] b4v = np.ascontiguousarray(b4, dtype=np.float64)
    cdef bint literal = literal_gate
    cdef Py_ssize_t n = V.shape[0]
    cdef Py_ssize_t D = V.shape[1]
    cdef Py_ssize_t L = Wrv.shape[0]
    g_arr = np.empty((n, n, D), dtype=np.float64)
    u_arr = np.empty((n, D), dtype=np.float64)
    vnew_arr = np.empty((n, D), dtype=np.float64)
    rbuf_arr = np.empty(D, dtype=np.float64)
    cdef double[:, :, ::1] g = g_arr
    cdef double[:, ::1] u = u_arr
    cdef double[:, ::1] vnew = vnew_arr
    cdef double[::1] rbuf = rbuf_arr
    cdef Py_ssize_t l, i, j, d, e
    cdef double acc, r, gate, vhat
    for l in range(L):
        for i in range(n):
            for d in range(D):
                acc = b4v[l, d]
                for e in range(D):
                    acc += W4v[l, d, e] * V[i, e]
                u[i, d] = acc
        for i in range(n):
            for d in range(D):
                acc = b3v[l, d]
                for e in range(D):
                    acc += W3v[l, d, e] * V[i, e]
                vnew[i, d] = acc
        for i in range(n):
            for j in range(n):
                # All D gate pre-activations read the layer-start edge state.
                for d in range(D):
                    r = brv[l, d]
                    for e in range(D):
                        r += Wrv[l, d, e] * E[i, j, e]
                    for e in range(D):
                        r += Wrv[l, d, D + e] * V[i, e]
                    for e in range(D):
                        r += Wrv[l, d, 2 * D + e] * V[j, e]
                    rbuf[d] = r
                for d in range(D):
                    r = rbuf[d]
                    if r >= 0.0:
                        gate = 1.0 / (1.0 + exp(-r))
                    else:
                        gate = exp(r)
                        gate = gate / (1.0 + gate)
                    g[i, j, d] = gate
                    E[i, j, d] += r
                    if not literal:
                        vnew[i, d] += gate * u[j, d]
        if literal:
            for i in range(n):
                for d in range(D):
                    acc = 0.0
                    for j in range(n):
                        acc += g[i, j, d]
                    vnew[i, d] += acc * u[i, d]
        for i in range(n):
            for d in range(D):
                vhat = vnew[i, d]
                if vhat > 0.0:
                    V[i, d] = V[i, d] + vhat + tp[l, d]
                else:
                    V[i, d] = V[i, d] + tp[l, d]
    return np.asarray(V)
