# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the dense pair kernels in ``_kernels_py``.

Rows are distributed over threads; inside a row the summation runs in
ascending column order, so results do not depend on the thread count.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport pow, fabs, copysign, fmax

cnp.import_array()


cdef inline double ipow(double x, double q) noexcept nogil:
    # small integer exponents (p = 2, 3, 4 and their shifts) avoid libm pow
    if q == 1.0:
        return x
    if q == 2.0:
        return x * x
    if q == 3.0:
        return x * x * x
    if q == 4.0:
        return (x * x) * (x * x)
    return pow(x, q)


cdef inline double opow(double a, double q) noexcept nogil:
    if a == 0.0:
        return 0.0
    return copysign(ipow(fabs(a), q), a)


cdef inline double apow(double a, double q) noexcept nogil:
    if a == 0.0:
        return 0.0 if q > 0.0 else (1.0 if q == 0.0 else 0.0)
    return ipow(fabs(a), q)


cdef int _nthreads(int threads) noexcept:
    return threads if threads > 0 else 1


def pv_apply(const double[:, ::1] K, const double[::1] E, const double[::1] v,
             double p, int threads=0):
    cdef Py_ssize_t n = v.shape[0], i, j
    cdef int nt = _nthreads(threads)
    cdef double q = p - 1.0, acc, vi
    out = np.empty(n)
    cdef double[::1] o = out
    for i in prange(n, nogil=True, num_threads=nt, schedule="static"):
        vi = v[i]
        acc = 0.0
        for j in range(n):
            acc = acc + K[i, j] * opow(vi - v[j], q)
        o[i] = acc + E[i] * opow(vi, q)
    return out


def pv_jacobian(const double[:, ::1] K, const double[::1] E, const double[::1] v,
                double p, double floor, int threads=0):
    cdef Py_ssize_t n = v.shape[0], i, j
    cdef int nt = _nthreads(threads)
    cdef double e = p - 2.0, c, acc, a, vi
    cdef bint neg = e < 0.0
    J = np.empty((n, n))
    cdef double[:, ::1] Jv = J
    for i in prange(n, nogil=True, num_threads=nt, schedule="static"):
        vi = v[i]
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            a = fabs(vi - v[j])
            if neg:
                a = fmax(a, floor)
            if e == 0.0:
                c = (p - 1.0) * K[i, j]
            else:
                c = (p - 1.0) * K[i, j] * apow(a, e)
            Jv[i, j] = -c
            acc = acc + c
        a = fabs(vi)
        if neg:
            a = fmax(a, floor)
        if e == 0.0:
            Jv[i, i] = acc + (p - 1.0) * E[i]
        else:
            Jv[i, i] = acc + (p - 1.0) * E[i] * apow(a, e)
    return J


def pair_energy(const double[:, ::1] K, const double[::1] E, const double[::1] w,
                const double[::1] v, double p, int threads=0):
    cdef Py_ssize_t n = v.shape[0], i, j
    cdef int nt = _nthreads(threads)
    cdef double acc, vi
    rows = np.empty(n)
    cdef double[::1] r = rows
    for i in prange(n, nogil=True, num_threads=nt, schedule="static"):
        vi = v[i]
        acc = 0.0
        for j in range(n):
            acc = acc + K[i, j] * apow(vi - v[j], p)
        r[i] = w[i] * (acc + 2.0 * E[i] * apow(vi, p))
    return float(np.sum(rows))


def pair_pairing(const double[:, ::1] K, const double[::1] E, const double[::1] w,
                 const double[::1] v, const double[::1] xi, double p, int threads=0):
    cdef Py_ssize_t n = v.shape[0], i, j
    cdef int nt = _nthreads(threads)
    cdef double q = p - 1.0, acc, vi, xii
    rows = np.empty(n)
    cdef double[::1] r = rows
    for i in prange(n, nogil=True, num_threads=nt, schedule="static"):
        vi = v[i]
        xii = xi[i]
        acc = 0.0
        for j in range(n):
            acc = acc + K[i, j] * opow(vi - v[j], q) * (xii - xi[j])
        r[i] = w[i] * (0.5 * acc + E[i] * opow(vi, q) * xii)
    return float(np.sum(rows))


def crossing_dissipation(const double[:, ::1] K, const double[::1] E, const double[::1] w,
                         const double[::1] v1, const double[::1] v2, above_in,
                         double p, int threads=0):
    cdef Py_ssize_t n = v1.shape[0], i, j
    cdef int nt = _nthreads(threads)
    cdef double q = p - 1.0, acc
    cdef cnp.uint8_t[::1] above = np.ascontiguousarray(above_in, dtype=np.uint8)
    rows = np.empty(n)
    cdef double[::1] r = rows
    for i in prange(n, nogil=True, num_threads=nt, schedule="static"):
        acc = 0.0
        for j in range(n):
            if above[i] != above[j]:
                acc = acc + K[i, j] * fabs(opow(v1[i] - v1[j], q) - opow(v2[i] - v2[j], q))
        if above[i]:
            acc = acc + 2.0 * E[i] * fabs(opow(v1[i], q) - opow(v2[i], q))
        r[i] = w[i] * acc
    return float(np.sum(rows))
