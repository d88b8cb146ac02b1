# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batched measurement kernels (twin of ``_pykernels``)."""

import numpy as np
from libc.math cimport sqrt

cdef double PROB_EPS = 1e-12


cdef inline double _clamp(double p) nogil:
    if p < PROB_EPS:
        return 0.0
    if p > 1.0 - PROB_EPS:
        return 1.0
    return p


cdef inline double _abs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def measure_rows(states, proj_idx, projs, uniforms):
    cdef const double complex[:, ::1] s = np.ascontiguousarray(states, dtype=np.complex128)
    cdef const Py_ssize_t[::1] idx = np.ascontiguousarray(proj_idx, dtype=np.intp)
    cdef const double complex[:, :, ::1] P = np.ascontiguousarray(projs, dtype=np.complex128)
    cdef const double[::1] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], d = s.shape[1]
    positive_arr = np.zeros(n, dtype=np.bool_)
    probs_arr = np.empty(n, dtype=np.float64)
    post_arr = np.empty((n, d), dtype=np.complex128)
    cdef unsigned char[::1] positive = positive_arr.view(np.uint8)
    cdef double[::1] probs = probs_arr
    cdef double complex[:, ::1] post = post_arr
    cdef double complex[::1] v = np.empty(d, dtype=np.complex128)
    cdef Py_ssize_t r, i, j, k
    cdef double complex acc
    cdef double p, norm2
    with nogil:
        for r in range(n):
            k = idx[r]
            p = 0.0
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc = acc + P[k, i, j] * s[r, j]
                v[i] = acc
                p = p + (s[r, i].conjugate() * acc).real
            p = _clamp(p)
            probs[r] = p
            norm2 = 0.0
            if u[r] < p:
                positive[r] = 1
                for i in range(d):
                    post[r, i] = v[i]
                    norm2 = norm2 + _abs2(v[i])
            else:
                for i in range(d):
                    post[r, i] = s[r, i] - v[i]
                    norm2 = norm2 + _abs2(post[r, i])
            norm2 = sqrt(norm2)
            for i in range(d):
                post[r, i] = post[r, i] / norm2
    return positive_arr, probs_arr, post_arr


def test_rows(expected, states, uniforms):
    cdef const double complex[:, ::1] e = np.ascontiguousarray(expected, dtype=np.complex128)
    cdef const double complex[:, ::1] s = np.ascontiguousarray(states, dtype=np.complex128)
    cdef const double[::1] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], d = s.shape[1]
    passed_arr = np.zeros(n, dtype=np.bool_)
    probs_arr = np.empty(n, dtype=np.float64)
    post_arr = np.empty((n, d), dtype=np.complex128)
    cdef unsigned char[::1] passed = passed_arr.view(np.uint8)
    cdef double[::1] probs = probs_arr
    cdef double complex[:, ::1] post = post_arr
    cdef Py_ssize_t r, i
    cdef double complex c
    cdef double p, norm2
    with nogil:
        for r in range(n):
            c = 0.0
            for i in range(d):
                c = c + e[r, i].conjugate() * s[r, i]
            p = _clamp(_abs2(c))
            probs[r] = p
            norm2 = 0.0
            if u[r] < p:
                passed[r] = 1
                for i in range(d):
                    post[r, i] = e[r, i] * c
                    norm2 = norm2 + _abs2(post[r, i])
            else:
                for i in range(d):
                    post[r, i] = s[r, i] - e[r, i] * c
                    norm2 = norm2 + _abs2(post[r, i])
            norm2 = sqrt(norm2)
            for i in range(d):
                post[r, i] = post[r, i] / norm2
    return passed_arr, probs_arr, post_arr


def overlap_rows(a, b):
    cdef const double complex[:, ::1] x = np.ascontiguousarray(a, dtype=np.complex128)
    cdef const double complex[:, ::1] y = np.ascontiguousarray(b, dtype=np.complex128)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], r, i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double complex c
    with nogil:
        for r in range(n):
            c = 0.0
            for i in range(d):
                c = c + x[r, i].conjugate() * y[r, i]
            out[r] = _abs2(c)
    return out_arr


def product_gram(x, y, int k):
    cdef const double complex[:, :, ::1] X = np.ascontiguousarray(x, dtype=np.complex128)
    cdef const double complex[:, :, ::1] Y = np.ascontiguousarray(y, dtype=np.complex128)
    cdef Py_ssize_t m = X.shape[0], p = Y.shape[0], ns = X.shape[1], d = X.shape[2]
    cdef Py_ssize_t a, b, i, j
    cdef int t
    out_arr = np.empty((m, p), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex prod, site, powed
    with nogil:
        for a in range(m):
            for b in range(p):
                prod = 1.0
                for i in range(ns):
                    site = 0.0
                    for j in range(d):
                        site = site + X[a, i, j].conjugate() * Y[b, i, j]
                    prod = prod * site
                powed = 1.0
                for t in range(k):
                    powed = powed * prod
                out[a, b] = powed
    return out_arr
