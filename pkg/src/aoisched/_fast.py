"""Compiled inner loop for the frame-time split.

The bisection over the time-allocation multiplier evaluates the Lambert W
function hundreds of times per frame, which dominates the scheduler runtime
in pure Python; this module holds njit twins of those scalar kernels.  The
public `scheduler.lambert_w0` is the reference implementation and the tests
pin the two against each other.
"""

import math

import numpy as np
from numba import njit

_LN2 = math.log(2.0)
_INV_E = math.exp(-1.0)


@njit(cache=True)
def _w0(x):
    # principal Lambert branch, Halley iteration; callers guarantee x >= -1/e
    if x <= -_INV_E:
        return -1.0
    if x == 0.0:
        return 0.0
    if x < -0.2:
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 * p ** 3 / 72.0
    elif x < 1.0:
        w = x * (1.0 - x + 1.5 * x * x)
    else:
        w = math.log(x)
        if w > 1.0:
            w -= math.log(w)
    tol = 1e-16 * max(abs(x), 1e-300)
    for _ in range(60):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= tol:
            break
        w1 = w + 1.0
        step = f / (ew * w1 - (w + 2.0) * f / (2.0 * w1))
        w -= step
        if abs(step) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


@njit(cache=True)
def total_split_time(nu, coeff, ys, tmin):
    total = 0.0
    for i in range(coeff.shape[0]):
        denom = 1.0 + _w0((ys[i] * nu - 1.0) * _INV_E)
        if denom > 1e-300:
            t = coeff[i] * _LN2 / denom
        else:
            t = math.inf
        total += t if t > tmin[i] else tmin[i]
    return total


@njit(cache=True)
def time_split(coeff, ys, tmin, frame_sec, rel_tol):
    """Bisection on the shared multiplier until |sum(tau) - frame| <= rel_tol*frame.

    coeff[i] = packets_i * packet_bits / bandwidth for the active sensors.
    The total time is non-increasing in the multiplier; the bracket grows by
    doubling (or shrinks by halving) from 1/max(ys).
    """
    nu = 1.0 / np.max(ys)
    if total_split_time(nu, coeff, ys, tmin) > frame_sec:
        lo, hi = nu, 2.0 * nu
        for _ in range(400):
            if total_split_time(hi, coeff, ys, tmin) <= frame_sec:
                break
            lo, hi = hi, 2.0 * hi
    else:
        lo, hi = nu / 2.0, nu
        for _ in range(400):
            if total_split_time(lo, coeff, ys, tmin) > frame_sec:
                break
            lo, hi = lo / 2.0, lo

    mid = hi
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        total = total_split_time(mid, coeff, ys, tmin)
        if abs(total - frame_sec) <= rel_tol * frame_sec:
            break
        if total > frame_sec:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * hi:
            break

    n = coeff.shape[0]
    taus = np.empty(n)
    for i in range(n):
        denom = 1.0 + _w0((ys[i] * mid - 1.0) * _INV_E)
        if denom > 1e-300:
            t = coeff[i] * _LN2 / denom
        else:
            t = math.inf
        taus[i] = t if t > tmin[i] else tmin[i]
    total = taus.sum()
    if total > frame_sec:
        # shave the bisection slack from the time above each full-power
        # minimum, so clamped sensors never dip below their feasible time
        excess = total - frame_sec
        free = 0.0
        for i in range(n):
            free += taus[i] - tmin[i]
        if free > 0.0:
            ratio = (free - excess) / free
            if ratio < 0.0:
                ratio = 0.0
            for i in range(n):
                taus[i] = tmin[i] + (taus[i] - tmin[i]) * ratio
    return taus
