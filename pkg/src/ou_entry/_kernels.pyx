# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: cylinder-function quadrature and OU path loops.

Function signatures and semantics match ``_fallback.py``; see there for
documentation.
"""

import numpy as np
cimport cython
from cython.parallel cimport prange
from libc.math cimport exp, log, sqrt, cos, sin, expm1, fabs, ceil, INFINITY, NAN
from libc.stdint cimport uint64_t, int64_t

from .errors import QuadratureError

cdef double TAIL_DROP = 50.0
cdef int MAX_LEVELS = 14
cdef double TWO_PI = 6.283185307179586
cdef double INV53 = 1.0 / 9007199254740992.0
cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t STEP_MUL = 0xD1B54A32D192ED03ULL


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = z ^ (z >> 30)
    z = z * 0xBF58476D1CE4E5B9ULL
    z = z ^ (z >> 27)
    z = z * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t path_key(uint64_t seed, uint64_t stream) noexcept nogil:
    return mix64(mix64(seed) + GOLDEN * (stream + 1))


cdef struct Pair:
    double z0
    double z1


cdef inline Pair normal_pair(uint64_t key, int64_t k) noexcept nogil:
    cdef uint64_t kk = <uint64_t>(2 * k + 1)
    cdef uint64_t h1 = mix64(key + STEP_MUL * kk)
    cdef uint64_t h2 = mix64(key + STEP_MUL * (kk + 1))
    cdef double u1 = (<double>(h1 >> 11) + 1.0) * INV53
    cdef double u2 = <double>(h2 >> 11) * INV53
    cdef double r = sqrt(-2.0 * log(u1))
    cdef Pair out
    out.z0 = r * cos(TWO_PI * u2)
    out.z1 = r * sin(TWO_PI * u2)
    return out


# ---------------------------------------------------------------------------
# cylinder-function integral
# ---------------------------------------------------------------------------
cdef inline double logf(double nu, double x, double s) noexcept nogil:
    cdef double e = exp(s)
    return nu * s - 0.5 * e * e - x * e


cdef void _one_integral(double nu, double x, double rtol,
                        double* out, double* err) noexcept nogil:
    cdef double root = sqrt(x * x + 4.0 * nu)
    cdef double w
    if x >= 0:
        w = 2.0 * nu / (x + root)
    else:
        w = 0.5 * (root - x)
    cdef double s0 = log(w)
    cdef double hmax = logf(nu, x, s0)
    cdef double width = 1.0 / sqrt(nu + w * w)
    cdef double left = width, right = width
    cdef int i
    for i in range(80):
        if logf(nu, x, s0 - left) > hmax - TAIL_DROP:
            left *= 2.0
        else:
            break
    for i in range(80):
        if logf(nu, x, s0 + right) > hmax - TAIL_DROP:
            right *= 2.0
        else:
            break
    cdef double span = left + right
    cdef int64_t n = <int64_t>ceil(span / (0.5 * width))
    if n < 8:
        n = 8
    cdef double a = s0 - left
    cdef double step = span / n
    cdef double total = 0.0, mids, est, new, e = INFINITY
    cdef int64_t k
    for k in range(n + 1):
        total += exp(logf(nu, x, a + k * step) - hmax)
    est = total * step
    for i in range(MAX_LEVELS):
        mids = 0.0
        for k in range(n):
            mids += exp(logf(nu, x, a + (k + 0.5) * step) - hmax)
        total += mids
        n *= 2
        step *= 0.5
        new = total * step
        e = fabs(new - est) / new
        est = new
        if e <= rtol:
            break
    out[0] = hmax + log(est)
    err[0] = e


def log_cyl_integral(double nu, x, double rtol=1e-13):
    if not nu > 0:
        raise ValueError("nu must be positive")
    cdef double[::1] xv = np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], i
    res = np.empty(n)
    errs = np.empty(n)
    cdef double[::1] rv = res
    cdef double[::1] ev = errs
    with nogil:
        for i in range(n):
            _one_integral(nu, xv[i], rtol, &rv[i], &ev[i])
    worst = float(errs.max()) if n else 0.0
    if worst > max(rtol, 1e-11):
        raise QuadratureError("cylinder integral did not converge", worst)
    return res, errs


# ---------------------------------------------------------------------------
# path simulation
# ---------------------------------------------------------------------------
cdef inline bint in_stop(double x, double lo, double hi, double a, double b) noexcept nogil:
    return x <= lo or x >= hi or (x >= a and x <= b)


cdef inline double clip01(double v) noexcept nogil:
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


def simulate_stopping(double x0, double mu, double theta, double sigma,
                      double dt, int64_t n_steps, double lo, double hi,
                      double a, double b, uint64_t seed, int64_t n_paths,
                      bint antithetic=False, bint interpolate=False,
                      int64_t path_offset=0, int threads=1):
    tau_arr = np.full(n_paths, -1.0)
    xs_arr = np.full(n_paths, np.nan)
    cdef double[::1] tau = tau_arr
    cdef double[::1] xs = xs_arr
    cdef double mc = exp(-theta * dt)
    cdef double sd = sigma * sqrt(-expm1(-2.0 * theta * dt) / (2.0 * theta))
    cdef int64_t p, j, pid
    cdef uint64_t key
    cdef double sgn, x, xn, z, t
    cdef bint done
    cdef Pair pr
    if threads < 1:
        threads = 1
    for p in prange(n_paths, nogil=True, num_threads=threads, schedule="dynamic"):
        pid = path_offset + p
        if antithetic:
            key = path_key(seed, <uint64_t>(pid // 2))
            sgn = -1.0 if pid % 2 == 1 else 1.0
        else:
            key = path_key(seed, <uint64_t>pid)
            sgn = 1.0
        x = x0
        done = in_stop(x, lo, hi, a, b)
        if done:
            tau[p] = 0.0
            xs[p] = x
        j = 0
        while j < n_steps and not done:
            if j % 2 == 0:
                pr = normal_pair(key, j // 2)
                z = pr.z0
            else:
                z = pr.z1
            xn = mu + (x - mu) * mc + sd * sgn * z
            j = j + 1
            if in_stop(xn, lo, hi, a, b):
                t = j * dt
                if interpolate and xn <= lo:
                    tau[p] = t - dt + dt * clip01((x - lo) / (x - xn))
                    xs[p] = lo
                elif interpolate and xn >= hi:
                    tau[p] = t - dt + dt * clip01((x - hi) / (x - xn))
                    xs[p] = hi
                else:
                    tau[p] = t
                    xs[p] = xn
                done = True
            x = xn
    return tau_arr, xs_arr


def simulate_entry_control(double x0, double mu, double theta, double sigma,
                           double lam, double dt, int64_t n_steps, double lo,
                           double a, double b, double gamma, uint64_t seed,
                           int64_t n_paths, bint antithetic=False,
                           int64_t path_offset=0, int threads=1):
    tau_arr = np.full(n_paths, -1.0)
    sig_arr = np.full(n_paths, -1.0)
    xt_arr = np.full(n_paths, np.nan)
    xg_arr = np.full(n_paths, np.nan)
    pen_arr = np.zeros(n_paths)
    cdef double[::1] tau = tau_arr
    cdef double[::1] sig = sig_arr
    cdef double[::1] xt = xt_arr
    cdef double[::1] xg = xg_arr
    cdef double[::1] pen = pen_arr
    cdef double mc = exp(-theta * dt)
    cdef double sd = sigma * sqrt(-expm1(-2.0 * theta * dt) / (2.0 * theta))
    cdef int64_t p, j, pid
    cdef int phase
    cdef uint64_t key
    cdef double sgn, x, xn, z, t, acc, dprev, dnew
    cdef Pair pr
    if threads < 1:
        threads = 1
    for p in prange(n_paths, nogil=True, num_threads=threads, schedule="dynamic"):
        pid = path_offset + p
        if antithetic:
            key = path_key(seed, <uint64_t>(pid // 2))
            sgn = -1.0 if pid % 2 == 1 else 1.0
        else:
            key = path_key(seed, <uint64_t>pid)
            sgn = 1.0
        x = x0
        phase = 0
        acc = 0.0
        if x <= lo or (x >= a and x <= b):
            tau[p] = 0.0
            xt[p] = x
            phase = 1
        if phase == 1 and x >= gamma:
            sig[p] = 0.0
            xg[p] = x
            phase = 2
        j = 0
        dprev = 1.0
        while j < n_steps and phase < 2:
            if j % 2 == 0:
                pr = normal_pair(key, j // 2)
                z = pr.z0
            else:
                z = pr.z1
            xn = mu + (x - mu) * mc + sd * sgn * z
            j = j + 1
            t = j * dt
            dnew = exp(-lam * t)
            if phase == 1:
                acc = acc + 0.5 * dt * (dprev * x + dnew * xn)
            dprev = dnew
            x = xn
            if phase == 0 and (x <= lo or (x >= a and x <= b)):
                tau[p] = t
                xt[p] = x
                phase = 1
            if phase == 1 and x >= gamma:
                sig[p] = t
                xg[p] = x
                phase = 2
        pen[p] = acc
    return tau_arr, xt_arr, sig_arr, xg_arr, pen_arr
