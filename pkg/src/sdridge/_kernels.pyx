# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled spectral grid kernels. See ``_kernels_py`` for the reference."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def kappa_grid(eigs, double gamma, lambdas, double tol=1e-12, int maxiter=200):
    cdef const double[::1] s = np.ascontiguousarray(eigs, dtype=np.float64)
    cdef const double[::1] lam_v = np.ascontiguousarray(lambdas, dtype=np.float64)
    cdef Py_ssize_t p = s.shape[0], L = lam_v.shape[0], i, j
    out_arr = np.empty(L, dtype=np.float64)
    it_arr = np.full(L, -1, dtype=np.int64)
    cdef double[::1] out = out_arr
    cdef long long[::1] iters = it_arr
    cdef double smax = 0.0, lam, lo, hi, k, h, dh, r, m1, m2, step
    cdef int it
    for i in range(p):
        if s[i] > smax:
            smax = s[i]
    with nogil:
        for j in range(L):
            lam = lam_v[j]
            lo = lam
            hi = lam + gamma * smax
            k = lo
            for it in range(1, maxiter + 1):
                m1 = 0.0
                m2 = 0.0
                for i in range(p):
                    r = s[i] / (s[i] + k)
                    m1 += r
                    m2 += r / (s[i] + k)
                m1 /= p
                m2 /= p
                h = 1.0 - gamma * m1 - lam / k
                if fabs(h) <= tol:
                    iters[j] = it
                    break
                if h < 0.0:
                    lo = k
                else:
                    hi = k
                dh = gamma * m2 + lam / (k * k)
                step = k - h / dh
                if not (lo < step < hi):
                    if lo > 0.0:
                        step = sqrt(lo * hi)
                    else:
                        step = 0.5 * (lo + hi)
                if hi - lo <= 4e-16 * hi:
                    iters[j] = it
                    k = step
                    break
                k = step
            out[j] = k
    return out_arr, it_arr


def functionals_grid(eigs, beta2, double gamma, kappas):
    cdef const double[::1] s = np.ascontiguousarray(eigs, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(beta2, dtype=np.float64)
    cdef const double[::1] kv = np.ascontiguousarray(kappas, dtype=np.float64)
    cdef Py_ssize_t p = s.shape[0], L = kv.shape[0], i, j
    out_arr = np.zeros((L, 8), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double g, g2, g3, g4, s2, ws, t2, t3, t4, q2, q3, q4, c, dev, d1, d2
    with nogil:
        for j in range(L):
            t2 = 0.0; t3 = 0.0; t4 = 0.0
            q2 = 0.0; q3 = 0.0; q4 = 0.0
            for i in range(p):
                g = 1.0 / (s[i] + kv[j])
                g2 = g * g
                g3 = g2 * g
                g4 = g2 * g2
                s2 = s[i] * s[i]
                t2 += s2 * g2
                t3 += s2 * g3
                t4 += s2 * g4
                ws = w[i] * s[i]
                q2 += ws * g2
                q3 += ws * g3
                q4 += ws * g4
            out[j, 0] = gamma * t2 / p
            out[j, 1] = gamma * t3 / p
            out[j, 2] = gamma * t4 / p
            out[j, 3] = q2
            out[j, 4] = q3
            out[j, 5] = q4
            c = kv[j] * out[j, 1] / (1.0 - out[j, 0])
            d1 = 0.0
            d2 = 0.0
            for i in range(p):
                g = 1.0 / (s[i] + kv[j])
                dev = s[i] * g - c
                ws = w[i] * s[i] * g * g * dev
                d1 += ws
                d2 += ws * dev
            out[j, 6] = d1
            out[j, 7] = d2
    return out_arr


def shrinkage_traces(eigs, lambdas):
    cdef const double[::1] s = np.ascontiguousarray(eigs, dtype=np.float64)
    cdef const double[::1] lam_v = np.ascontiguousarray(lambdas, dtype=np.float64)
    cdef Py_ssize_t p = s.shape[0], L = lam_v.shape[0], i, j
    df_arr = np.zeros(L, dtype=np.float64)
    dfpd_arr = np.zeros(L, dtype=np.float64)
    cdef double[::1] df = df_arr
    cdef double[::1] dfpd = dfpd_arr
    cdef double h, a, b
    with nogil:
        for j in range(L):
            a = 0.0
            b = 0.0
            for i in range(p):
                h = s[i] / (s[i] + lam_v[j])
                a += h
                b += h * h
            df[j] = a
            dfpd[j] = b
    return df_arr, dfpd_arr
