"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` function for function.  They are selected
automatically when the compiled extension is unavailable, or when
``OU_ENTRY_PURE=1`` is set.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import QuadratureError

# log-integrand drop below the peak at which the tails are cut
TAIL_DROP = 50.0
MAX_LEVELS = 14

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_STEP_MUL = _U64(0xD1B54A32D192ED03)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


# --------------------------------------------------------------------------
# cylinder-function integral
# --------------------------------------------------------------------------
def _mode(nu, x):
    root = np.sqrt(x * x + 4.0 * nu)
    w = np.where(x >= 0, 2.0 * nu / (x + root), 0.5 * (root - x))
    return w


def _logf(nu, x, s):
    e = np.exp(s)
    return nu * s - 0.5 * e * e - x * e


def log_cyl_integral(nu, x, rtol=1e-13, chunk=1024):
    """log of int_0^inf t**(nu-1) exp(-t**2/2 - x t) dt, vectorised in x.

    Substituting t = exp(s) gives a smooth unimodal integrand on the real
    line; the trapezoid rule on it converges geometrically.  The log-peak
    is factored out so any real x is safe from overflow.

    Returns ``(log_value, rel_error_estimate)``.
    """
    nu = float(nu)
    if not nu > 0:
        raise ValueError("nu must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    out = np.empty_like(x)
    err = np.empty_like(x)
    for i in range(0, x.size, chunk):
        out[i:i + chunk], err[i:i + chunk] = _block(nu, x[i:i + chunk], rtol)
    if x.size and not np.all(err <= max(rtol, 1e-11)):
        raise QuadratureError(
            "cylinder integral did not converge", float(np.max(err))
        )
    return out, err


def _block(nu, x, rtol):
    w = _mode(nu, x)
    s0 = np.log(w)
    hmax = _logf(nu, x, s0)
    width = 1.0 / np.sqrt(nu + w * w)

    def extent(sign):
        ext = width.copy()
        for _ in range(80):
            low = _logf(nu, x, s0 + sign * ext) > hmax - TAIL_DROP
            if not low.any():
                break
            ext = np.where(low, 2.0 * ext, ext)
        return ext

    left, right = extent(-1.0), extent(1.0)
    span = left + right
    n = int(max(8, np.ceil(np.max(span / (0.5 * width)))))
    a = s0 - left
    step = span / n

    def fsum(nodes_k):
        s = a[:, None] + step[:, None] * nodes_k[None, :]
        return np.exp(_logf(nu, x[:, None], s) - hmax[:, None]).sum(axis=1)

    total = fsum(np.arange(n + 1, dtype=float))
    est = total * step
    err = np.full_like(est, np.inf)
    for _ in range(MAX_LEVELS):
        mids = fsum(np.arange(n, dtype=float) + 0.5)
        total = total + mids
        n *= 2
        step = step * 0.5
        new = total * step
        err = np.abs(new - est) / new
        est = new
        if np.all(err <= rtol):
            break
        if n > 1 << 16:
            break
    return hmax + np.log(est), err


# --------------------------------------------------------------------------
# counter-based normal stream
# --------------------------------------------------------------------------
def _mix64(z):
    z = z ^ (z >> _U64(30))
    z = z * _M1
    z = z ^ (z >> _U64(27))
    z = z * _M2
    return z ^ (z >> _U64(31))


def path_keys(seed, paths):
    paths = np.asarray(paths, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(_mix64(np.full(paths.shape, seed, dtype=np.uint64))
                      + _GOLDEN * (paths + _U64(1)))


def normal_pair(keys, k):
    """Two independent N(0,1) arrays for pair index ``k`` of each stream."""
    with np.errstate(over="ignore"):
        kk = _U64(2 * int(k) + 1)
        h1 = _mix64(keys + _STEP_MUL * kk)
        h2 = _mix64(keys + _STEP_MUL * (kk + _U64(1)))
    u1 = ((h1 >> _U64(11)).astype(float) + 1.0) * _INV53
    u2 = (h2 >> _U64(11)).astype(float) * _INV53
    r = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * math.pi * u2
    return r * np.cos(ang), r * np.sin(ang)


def stream_normals(seed, paths, n_steps, antithetic=False):
    """Dense (len(paths), n_steps) array of the normals used by the kernels."""
    paths = np.asarray(paths, dtype=np.int64)
    streams = paths // 2 if antithetic else paths
    sign = np.where((paths % 2 == 1) & antithetic, -1.0, 1.0)
    keys = path_keys(seed, streams)
    out = np.empty((paths.size, n_steps))
    for k in range((n_steps + 1) // 2):
        z0, z1 = normal_pair(keys, k)
        out[:, 2 * k] = z0
        if 2 * k + 1 < n_steps:
            out[:, 2 * k + 1] = z1
    return out * sign[:, None]


# --------------------------------------------------------------------------
# path simulation
# --------------------------------------------------------------------------
def _in_stop(x, lo, hi, a, b):
    return (x <= lo) | (x >= hi) | ((x >= a) & (x <= b))


def _crossing_time(t_prev, x_prev, x_new, level, dt):
    frac = (x_prev - level) / (x_prev - x_new)
    return t_prev + dt * np.clip(frac, 0.0, 1.0)


def simulate_stopping(x0, mu, theta, sigma, dt, n_steps, lo, hi, a, b,
                      seed, n_paths, antithetic=False, interpolate=False,
                      path_offset=0, threads=1):
    """First grid time at which the exact OU chain enters the stop set.

    The stop set is ``{x <= lo} | {x >= hi} | [a, b]``.  Returns
    ``(tau, x_tau)``; ``tau`` is ``-1`` for paths not stopped by the horizon.
    With ``interpolate`` the crossing of ``lo``/``hi`` is located linearly
    between grid times and ``x_tau`` is set to the level.
    """
    ids = np.arange(path_offset, path_offset + n_paths, dtype=np.int64)
    tau = np.full(n_paths, -1.0)
    xs = np.full(n_paths, np.nan)
    x = np.full(n_paths, float(x0))
    hit = _in_stop(x, lo, hi, a, b)
    tau[hit] = 0.0
    xs[hit] = x[hit]
    active = np.flatnonzero(~hit)
    x = x[active]
    mc = math.exp(-theta * dt)
    sd = sigma * math.sqrt(-math.expm1(-2.0 * theta * dt) / (2.0 * theta))
    streams = ids // 2 if antithetic else ids
    sign = np.where((ids % 2 == 1) & antithetic, -1.0, 1.0)
    keys_all = path_keys(seed, streams)
    j = 0
    while j < n_steps and active.size:
        keys = keys_all[active]
        pair = list(normal_pair(keys, j // 2))
        for which in (0, 1):
            if j >= n_steps or not active.size:
                break
            x_new = mu + (x - mu) * mc + sd * sign[active] * pair[which]
            j += 1
            stop = _in_stop(x_new, lo, hi, a, b)
            if stop.any():
                idx = active[stop]
                t = j * dt
                if interpolate:
                    xp, xn = x[stop], x_new[stop]
                    tt = np.full(xp.shape, t)
                    xv = xn.copy()
                    below = xn <= lo
                    above = xn >= hi
                    tt[below] = _crossing_time(t - dt, xp[below], xn[below], lo, dt)
                    xv[below] = lo
                    tt[above] = _crossing_time(t - dt, xp[above], xn[above], hi, dt)
                    xv[above] = hi
                    tau[idx], xs[idx] = tt, xv
                else:
                    tau[idx], xs[idx] = t, x_new[stop]
                keep = ~stop
                active = active[keep]
                x_new = x_new[keep]
                pair[1] = pair[1][keep]
            x = x_new
    return tau, xs


def simulate_entry_control(x0, mu, theta, sigma, lam, dt, n_steps, lo, a, b,
                           gamma, seed, n_paths, antithetic=False,
                           path_offset=0, threads=1):
    """Entry by the stop rule, then a single purchase at the first X >= gamma.

    Returns ``(tau, x_tau, sig, x_sig, pen)`` with ``pen`` the trapezoid
    approximation of int_tau^sig exp(-lam t) X_t dt (to the horizon if no
    purchase happened).  ``tau``/``sig`` are ``-1`` when not reached.
    """
    n_paths = int(n_paths)
    ids = np.arange(path_offset, path_offset + n_paths, dtype=np.int64)
    streams = ids // 2 if antithetic else ids
    sign = np.where((ids % 2 == 1) & antithetic, -1.0, 1.0)
    keys = path_keys(seed, streams)
    mc = math.exp(-theta * dt)
    sd = sigma * math.sqrt(-math.expm1(-2.0 * theta * dt) / (2.0 * theta))
    tau = np.full(n_paths, -1.0)
    sig = np.full(n_paths, -1.0)
    x_tau = np.full(n_paths, np.nan)
    x_sig = np.full(n_paths, np.nan)
    pen = np.zeros(n_paths)
    x = np.full(n_paths, float(x0))
    # phase 0: waiting to enter, 1: entered and waiting to buy, 2: done
    phase = np.zeros(n_paths, dtype=np.int8)

    def update(j, x):
        t = j * dt
        wait = phase == 0
        enter = wait & ((x <= lo) | ((x >= a) & (x <= b)))
        tau[enter] = t
        x_tau[enter] = x[enter]
        phase[enter] = 1
        buy = (phase == 1) & (x >= gamma)
        sig[buy] = t
        x_sig[buy] = x[buy]
        phase[buy] = 2

    update(0, x)
    prev_disc = np.ones(n_paths)
    j = 0
    while j < n_steps and np.any(phase < 2):
        z0, z1 = normal_pair(keys, j // 2)
        for z in (z0, z1):
            if j >= n_steps:
                break
            was_holding = phase == 1
            x_new = mu + (x - mu) * mc + sd * sign * z
            j += 1
            disc = math.exp(-lam * j * dt)
            pen = np.where(was_holding,
                           pen + 0.5 * dt * (prev_disc * x + disc * x_new), pen)
            prev_disc = np.full(n_paths, disc)
            x = x_new
            update(j, x)
    return tau, x_tau, sig, x_sig, pen
