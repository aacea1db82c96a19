# cython: language_level=3
"""Compiled versions of the kernels in ``_pycore``.

Signatures and return conventions match the numpy fallback exactly; the
test-suite runs both and compares them.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, fabs, fmax

cnp.import_array()

DEF NEWTON_MAX_ITER = 200


cdef inline double _logaddexp(double x, double y) nogil:
    if x > y:
        return x + log1p(exp(y - x))
    return y + log1p(exp(x - y))


def lse_softmax(a, double lam):
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t k = av.shape[0], i
    out = np.empty(k, dtype=np.float64)
    cdef double[::1] w = out
    cdef double top = av[0] / lam, total = 0.0, z
    for i in range(1, k):
        z = av[i] / lam
        if z > top:
            top = z
    for i in range(k):
        w[i] = exp(av[i] / lam - top)
        total += w[i]
    for i in range(k):
        w[i] /= total
    return lam * (top + log(total)), out


def info_premium(nu, ddiag, s, g, double lam):
    cdef const double[::1] nv = np.ascontiguousarray(nu, dtype=np.float64)
    cdef const double[::1] dv = np.ascontiguousarray(ddiag, dtype=np.float64)
    cdef const double[:, ::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef const double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t k = sv.shape[0], p = sv.shape[1], i, j
    out = np.empty(k, dtype=np.float64)
    cdef double[::1] L = out
    weight_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] weight = weight_arr
    cdef double acc, sij, head = 0.0
    # 1 - nu_j summed from the other weights, exact when nu_j is near 1
    for j in range(p):
        weight[j] = head
        head += nv[j]
    head = 0.0
    for j in range(p - 1, -1, -1):
        weight[j] = nv[j] * (weight[j] + head) * dv[j] * dv[j] * gv[j] * gv[j]
        head += nv[j]
    for i in range(k):
        acc = 0.0
        for j in range(p):
            sij = sv[i, j]
            acc += weight[j] * sij / (1.0 + dv[j] * sij)
        L[i] = acc / (2.0 * lam)
    return out


def linear_premium(nu, x, sinv, double lam):
    cdef const double[::1] nv = np.ascontiguousarray(nu, dtype=np.float64)
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(sinv, dtype=np.float64)
    cdef Py_ssize_t k = xv.shape[0], kk = xv.shape[1], i, j
    out = np.empty(k, dtype=np.float64)
    cdef double[::1] L = out
    cdef double mean, var, dev
    for i in range(k):
        mean = 0.0
        for j in range(kk):
            mean += nv[j] * xv[i, j]
        var = 0.0
        for j in range(kk):
            dev = xv[i, j] - mean
            var += nv[j] * dev * dev
        L[i] = sv[i] * var / (2.0 * lam)
    return out


def select_index(u, double zeta):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t k = uv.shape[0], i
    cdef double cum = 0.0
    for i in range(k):
        cum += uv[i]
        if cum >= zeta:
            return i
    return k - 1


def solve_layer(a1, double beta, double lam):
    cdef const double[::1] av = np.ascontiguousarray(a1, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], r
    cdef int it
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = out
    cdef double x, stay, h, q2, step, lo = 1.0 / (1.0 - beta)
    with nogil:
        for r in range(n):
            x = fmax(av[r], lo)
            for it in range(NEWTON_MAX_ITER):
                stay = (1.0 + beta * x) / lam
                h = x - lam * _logaddexp(av[r] / lam, stay)
                q2 = 1.0 / (1.0 + exp(av[r] / lam - stay))
                step = h / (1.0 - beta * q2)
                x = x - step
                if fabs(step) <= 1e-14 * fmax(1.0, fabs(x)):
                    break
            xv[r] = x
    return out


def bellman_sweep(indptr, indices, data, offset, m_nodes, values,
                  double beta, double lam):
    cdef const cnp.int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const cnp.int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[::1] dt = np.ascontiguousarray(data, dtype=np.float64)
    cdef const double[::1] cs = np.ascontiguousarray(offset, dtype=np.float64)
    cdef const double[::1] mn = np.ascontiguousarray(m_nodes, dtype=np.float64)
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], r, e
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] nv = out
    cdef double expect, delta = 0.0
    with nogil:
        for r in range(n):
            expect = cs[r]
            for e in range(ip[r], ip[r + 1]):
                expect += dt[e] * v[ix[e]]
            nv[r] = lam * _logaddexp((mn[r] + beta * expect) / lam,
                                     (1.0 + beta * v[r]) / lam)
            delta = fmax(delta, fabs(nv[r] - v[r]))
    return out, delta
