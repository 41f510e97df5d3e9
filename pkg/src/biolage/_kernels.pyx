# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled hot loops.  Semantics mirror ``_fallback`` operation for operation."""
import numpy as np

from libc.math cimport fabs, frexp, ldexp

cdef double _BIG = ldexp(1.0, 256)
cdef double _SMALL = ldexp(1.0, -256)


def apply_jumps(double[::1] offsets, const double[::1] times, const long long[::1] idx,
                const unsigned char[::1] kinds, double g_plus, double g_minus):
    """Apply linear jumps in event order.

    ``offsets[i]`` is the age of individual ``i`` at the start of the interval;
    ``times`` are event times relative to that start.  Kind 0 divides the
    pre-jump age by ``g_plus``, kind 1 by ``g_minus``.
    """
    cdef Py_ssize_t e, i, n = times.shape[0]
    cdef double s, a
    with nogil:
        for e in range(n):
            i = idx[e]
            s = times[e]
            a = offsets[i] + s
            if kinds[e] == 0:
                a = a / g_plus
            else:
                a = a / g_minus
            offsets[i] = a - s


cdef inline void _deriv(const double[::1] z, double[::1] out, const double[::1] c,
                        const double[::1] rates, const double[::1] s, Py_ssize_t k_start) noexcept nogil:
    cdef Py_ssize_t k, n = z.shape[0]
    if k_start == 0:
        out[0] = (0.0 - rates[0] * z[0]) + s[0]
        k_start = 1
    for k in range(k_start, n):
        out[k] = (c[k] * z[k - 1] - rates[k] * z[k]) + s[k]


def rk4_cascade(double[::1] y, long long[::1] expo, const double[::1] rates,
                const double[::1] source, double dt, Py_ssize_t n_steps, Py_ssize_t k_start):
    """Classical RK4 on ``E_k' = k E_{k-1} - rates_k E_k + source_k`` in scaled form.

    ``E_k = y[k] * 2**expo[k]``.  Components below ``k_start`` are frozen.
    After each step every component is renormalised by an exact power of two
    once it leaves ``[2**-256, 2**256]``.
    """
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t k, step, lo
    cdef int e
    cdef double half = 0.5 * dt
    cdef double sixth = dt / 6.0
    cdef double[::1] c = np.zeros(n)
    cdef double[::1] s = np.zeros(n)
    cdef double[::1] z = np.zeros(n)
    cdef double[::1] k1 = np.zeros(n)
    cdef double[::1] k2 = np.zeros(n)
    cdef double[::1] k3 = np.zeros(n)
    cdef double[::1] k4 = np.zeros(n)
    lo = k_start
    with nogil:
        for step in range(n_steps):
            c[0] = 0.0
            for k in range(1, n):
                c[k] = ldexp(<double>k, <int>(expo[k - 1] - expo[k]))
            for k in range(n):
                s[k] = ldexp(source[k], <int>(-expo[k]))
            _deriv(y, k1, c, rates, s, lo)
            for k in range(n):
                z[k] = y[k] + half * k1[k]
            _deriv(z, k2, c, rates, s, lo)
            for k in range(n):
                z[k] = y[k] + half * k2[k]
            _deriv(z, k3, c, rates, s, lo)
            for k in range(n):
                z[k] = y[k] + dt * k3[k]
            _deriv(z, k4, c, rates, s, lo)
            for k in range(lo, n):
                y[k] = y[k] + sixth * (((k1[k] + 2.0 * k2[k]) + 2.0 * k3[k]) + k4[k])
            for k in range(n):
                if y[k] != 0.0 and (fabs(y[k]) > _BIG or fabs(y[k]) < _SMALL):
                    y[k] = frexp(y[k], &e)
                    expo[k] = expo[k] + e
