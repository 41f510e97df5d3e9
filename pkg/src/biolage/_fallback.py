"""Pure-Python (numpy) versions of the compiled kernels.

Results are bit-identical to ``_kernels``: every floating-point operation is
performed in the same order on the same operands.
"""
from __future__ import annotations

import numpy as np

_BIG = np.ldexp(1.0, 256)
_SMALL = np.ldexp(1.0, -256)


def apply_jumps_generic(offsets, times, idx, kinds, target_plus, target_minus):
    """Apply jumps with arbitrary vectorised inverse maps.

    Events are grouped into rounds: round ``r`` holds the ``r``-th event of each
    individual.  Individuals are independent, so processing rounds in order
    reproduces the sequential event loop exactly.
    """
    n = len(idx)
    if n == 0:
        return
    idx = np.asarray(idx, dtype=np.int64)
    order = np.argsort(idx, kind="stable")
    sidx = idx[order]
    pos = np.arange(n)
    first = np.ones(n, dtype=bool)
    first[1:] = sidx[1:] != sidx[:-1]
    rank = pos - np.maximum.accumulate(np.where(first, pos, 0))
    by_rank = order[np.argsort(rank, kind="stable")]
    bounds = np.concatenate(([0], np.cumsum(np.bincount(rank))))
    for r in range(len(bounds) - 1):
        sel = by_rank[bounds[r]:bounds[r + 1]]
        i = idx[sel]
        s = times[sel]
        a = offsets[i] + s
        plus = kinds[sel] == 0
        out = np.empty_like(a)
        out[plus] = target_plus(a[plus])
        out[~plus] = target_minus(a[~plus])
        offsets[i] = out - s


def apply_jumps(offsets, times, idx, kinds, g_plus, g_minus):
    apply_jumps_generic(offsets, times, idx, kinds, lambda a: a / g_plus, lambda a: a / g_minus)


def _deriv(z, c, rates, s, k_start):
    out = np.zeros_like(z)
    zprev = np.empty_like(z)
    zprev[0] = 0.0
    zprev[1:] = z[:-1]
    out[k_start:] = (c[k_start:] * zprev[k_start:] - rates[k_start:] * z[k_start:]) + s[k_start:]
    return out


def rk4_cascade(y, expo, rates, source, dt, n_steps, k_start):
    n = y.shape[0]
    half = 0.5 * dt
    sixth = dt / 6.0
    ks = np.arange(n, dtype=float)
    for _ in range(n_steps):
        c = np.zeros(n)
        c[1:] = np.ldexp(ks[1:], (expo[:-1] - expo[1:]).astype(np.int32))
        s = np.ldexp(source, (-expo).astype(np.int32))
        k1 = _deriv(y, c, rates, s, k_start)
        k2 = _deriv(y + half * k1, c, rates, s, k_start)
        k3 = _deriv(y + half * k2, c, rates, s, k_start)
        k4 = _deriv(y + dt * k3, c, rates, s, k_start)
        y[k_start:] = y[k_start:] + sixth * (((k1[k_start:] + 2.0 * k2[k_start:]) + 2.0 * k3[k_start:]) + k4[k_start:])
        a = np.abs(y)
        fix = (y != 0.0) & ((a > _BIG) | (a < _SMALL))
        if fix.any():
            m, e = np.frexp(y[fix])
            y[fix] = m
            expo[fix] += e
