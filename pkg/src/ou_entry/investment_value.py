"""The post-entry investment problem: control boundaries and the value U.

Reflecting regime (k > 0 on [0, 1])
    The optimal control keeps the price above beta*(c) by buying whenever the
    running minimum of X crosses the boundary.  With
        G(x, c) = mu (k(c) - theta) / lam + k(c) (x - mu) / (lam + theta)
    the boundary solves the smooth-fit equation k / (lam + theta) = G phi'/phi and
        U(x, c) = x (c' - c) + lam/(lam+theta) Phi(c') (x + mu theta/lam) - phi(x) Sigma(c'),
    where c' = max(c, g*(x)), g* is the inverse of beta* and
        Sigma(c) = -int_c^1 G(beta*(y), y) / phi(beta*(y)) dy > 0.

Repelling regime (k < 0 on [0, 1])
    The control is bang-bang: buy 1 - c units the first time X >= gamma*(c).
    Below gamma*, U is psi(x)/psi(gamma*) A(gamma*) plus an affine term; above,
    U = x (1 - c).  gamma* is fixed by C^1 pasting.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.optimize import brentq

from .core_model import ModelParams, RegimeKind
from .errors import (BracketError, ConsistencyError, QuadratureError,
                     UnsupportedRegimeError)
from .special_fn import FundamentalPair, PairValues

DEFAULT_GRID = 201
WINDOW_SD = 40.0
ROOT_XTOL = 1e-13
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_NODES_LO, _GL_WEIGHTS_LO = np.polynomial.legendre.leggauss(6)


def _brent(f, a, b):
    return brentq(f, a, b, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)


def walk_to_sign_change(f, start, direction, step0, limit, f_start=None):
    """Step geometrically from ``start`` until ``f`` changes sign.

    Returns the bracketing pair ``(a, b)`` ordered as walked, or ``None`` when
    ``limit`` is passed first.
    """
    f0 = f(start) if f_start is None else f_start
    prev = start
    step = step0
    while True:
        nxt = start + direction * step
        if (nxt - limit) * direction > 0:
            nxt = limit
        fn = f(nxt)
        if np.sign(fn) != np.sign(f0) or fn == 0.0:
            return prev, nxt
        if nxt == limit:
            return None
        prev = nxt
        step *= 2.0


def g_fn(params: ModelParams, x, c):
    k = params.k(c)
    lam, th, mu = params.lam, params.theta, params.mu
    return mu * (k - th) / lam + k * (np.asarray(x) - mu) / (lam + th)


def _x0_point(params, c):
    k = float(params.k(c))
    return -params.theta * params.mu * float(params.penalty.d1(c)) / k


# --------------------------------------------------------------------------
# boundary solvers
# --------------------------------------------------------------------------
def _beta_residual(params, pair, c):
    kk = float(params.k(c)) / (params.lam + params.theta)

    def r(x):
        return kk - float(g_fn(params, x, c)) * pair.dlog_phi(x)

    return r


def solve_beta_star(params: ModelParams, c: float, pair: Optional[FundamentalPair] = None):
    """Reflecting boundary beta*(c): root of G_x phi - G phi' = 0 below min(x0, xhat0)."""
    if params.classify_regime().kind is not RegimeKind.REFLECTING:
        raise UnsupportedRegimeError("beta* exists only in the reflecting regime")
    pair = pair or FundamentalPair(params, params.lam)
    c = float(c)
    ref = params.reference_points(c)
    upper = min(ref.x0, ref.xhat0)
    r = _beta_residual(params, pair, c)
    sd = params.stationary_sd
    for mult in (1.0, 2.0, 4.0):
        lo = upper - mult * WINDOW_SD * sd
        br = walk_to_sign_change(r, upper, -1.0, 0.05 * sd, lo)
        if br is not None:
            a, b = sorted(br)
            return _brent(r, a, b)
    raise BracketError("no sign change for the beta* equation",
                       {"c": c, "upper": upper, "r_upper": r(upper)})


def _gamma_residual(params, pair, c):
    """Pasting condition divided by (1 - c), finite at c = 1."""
    lam, th, mu = params.lam, params.theta, params.mu
    pt = float(params.penalty.value_over_gap(c))

    def r(x):
        a = x - lam * pt * ((x - mu) / (lam + th) + mu / lam)
        return pair.dlog_psi(x) * a + lam * pt / (lam + th) - 1.0

    return r


def gamma_lower_bound(params: ModelParams, c: float) -> float:
    """max(xtilde, xbar0), written through Phi/(1-c) so that c = 1 is allowed."""
    zt = float(params.zeta_over_gap(c))
    pt = float(params.penalty.value_over_gap(c))
    th_mu = params.theta * params.mu
    return max(th_mu / zt, th_mu * pt / zt)


def solve_gamma_star(params: ModelParams, c: float, pair: Optional[FundamentalPair] = None):
    """Repelling boundary gamma*(c) from C^1 pasting of the two branches of U."""
    if params.classify_regime().kind is not RegimeKind.REPELLING:
        raise UnsupportedRegimeError("gamma* exists only in the repelling regime")
    pair = pair or FundamentalPair(params, params.lam)
    c = float(c)
    lower = gamma_lower_bound(params, c)
    r = _gamma_residual(params, pair, c)
    r_lo = r(lower)
    if not r_lo > 0:
        raise BracketError("pasting residual not positive at max(xtilde, xbar0)",
                           {"c": c, "lower": lower, "residual": r_lo})
    sd = params.stationary_sd
    for mult in (1.0, 2.0, 4.0):
        hi = lower + mult * WINDOW_SD * sd
        br = walk_to_sign_change(r, lower, 1.0, 0.05 * sd, hi, f_start=r_lo)
        if br is not None:
            a, b = sorted(br)
            return _brent(r, a, b)
    raise BracketError("no sign change for the gamma* equation",
                       {"c": c, "lower": lower})


def control_boundary_residual(params: ModelParams, c: float, x: float,
                              pair: Optional[FundamentalPair] = None) -> float:
    """Residual of the defining equation of beta*(c) or gamma*(c) at ``x``."""
    pair = pair or FundamentalPair(params, params.lam)
    if params.classify_regime().kind is RegimeKind.REFLECTING:
        return float(_beta_residual(params, pair, float(c))(x))
    return float(_gamma_residual(params, pair, float(c))(x))


def _beta_slope(params, pair, c, b):
    """d beta*/dc by implicit differentiation of the smooth-fit equation."""
    lam, th, mu = params.lam, params.theta, params.mu
    k = float(params.k(c))
    dk = lam * float(params.penalty.d2(c))
    rho = pair.dlog_phi(b)
    drho = float(pair.d2log_phi(b, rho))
    g = float(g_fn(params, b, c))
    r_x = -(k / (lam + th)) * rho - g * drho
    g_c = mu * dk / lam + dk * (b - mu) / (lam + th)
    r_c = dk / (lam + th) - g_c * rho
    return -r_c / r_x


# --------------------------------------------------------------------------
# tabulated boundary
# --------------------------------------------------------------------------
@dataclass
class ControlBoundary:
    """beta* or gamma* on a c-grid with a monotone interpolant.

    In the reflecting regime the interpolant is the cubic Hermite spline with
    slopes from implicit differentiation; ``g_star`` is its inverse, extended
    by 0 above beta*(0) and by 1 below beta*(1).
    """

    kind: RegimeKind
    c_grid: np.ndarray
    values: np.ndarray
    slopes: Optional[np.ndarray] = None
    _interp: object = field(default=None, repr=False)

    @classmethod
    def build(cls, params: ModelParams, n_grid: int = DEFAULT_GRID,
              pair: Optional[FundamentalPair] = None) -> "ControlBoundary":
        kind = params.classify_regime().kind
        if kind is RegimeKind.UNSUPPORTED:
            raise UnsupportedRegimeError(
                "k changes sign on [0, 1]; this parameter case has no solved control problem")
        pair = pair or FundamentalPair(params, params.lam)
        grid = np.linspace(0.0, 1.0, int(n_grid))
        if kind is RegimeKind.REFLECTING:
            vals = np.array([solve_beta_star(params, c, pair) for c in grid])
            slopes = np.array([_beta_slope(params, pair, c, b) for c, b in zip(grid, vals)])
            interp = CubicHermiteSpline(grid, vals, slopes)
            fine = np.linspace(0.0, 1.0, 20 * (len(grid) - 1) + 1)
            if not np.all(interp(fine, 1) < 0):
                raise ConsistencyError("beta* interpolant is not strictly decreasing")
            return cls(kind, grid, vals, slopes, interp)
        vals = np.array([solve_gamma_star(params, c, pair) for c in grid])
        return cls(kind, grid, vals, None, PchipInterpolator(grid, vals))

    def __call__(self, c):
        out = self._interp(np.clip(np.asarray(c, dtype=float), 0.0, 1.0))
        return float(out) if np.ndim(out) == 0 else out

    def g_star(self, x):
        """Inverse of the (decreasing) reflecting boundary."""
        if self.kind is not RegimeKind.REFLECTING:
            raise UnsupportedRegimeError("g* is defined only in the reflecting regime")
        x = np.asarray(x, dtype=float)
        xf = np.atleast_1d(x).ravel()
        b = self.values
        out = np.where(xf >= b[0], 0.0, 1.0)
        inside = (xf < b[0]) & (xf > b[-1])
        if inside.any():
            xi = xf[inside]
            # b is decreasing: interval index i with b[i] >= x > b[i+1]
            idx = np.searchsorted(-b, -xi, side="left") - 1
            idx = np.clip(idx, 0, len(b) - 2)
            lo = self.c_grid[idx].copy()
            hi = self.c_grid[idx + 1].copy()
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                above = self._interp(mid) > xi
                lo = np.where(above, mid, lo)
                hi = np.where(above, hi, mid)
                if np.all(hi - lo <= 1e-16):
                    break
            out[inside] = 0.5 * (lo + hi)
        return out.reshape(x.shape) if x.ndim else float(out[0])


# --------------------------------------------------------------------------
# gain function
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class GainEval:
    """U, U_x and the fundamental-pair values at the same points."""

    U: np.ndarray
    Ux: np.ndarray
    pv: PairValues


class GainFunction:
    """U(x, c), U_x(x, c) and the generator image L(x, c) = (L_X - lam) U."""

    def __init__(self, params: ModelParams, n_grid: int = DEFAULT_GRID,
                 boundary: Optional[ControlBoundary] = None):
        self.params = params
        self.regime = params.classify_regime()
        if self.regime.kind is RegimeKind.UNSUPPORTED:
            raise UnsupportedRegimeError(
                "k changes sign on [0, 1]; this parameter case has no solved control problem")
        self.pair = FundamentalPair(params, params.lam)
        self.boundary = boundary or ControlBoundary.build(params, n_grid, self.pair)
        if self.reflecting:
            self._build_sigma_table()

    @property
    def reflecting(self) -> bool:
        return self.regime.kind is RegimeKind.REFLECTING

    # -- boundary access ------------------------------------------------------
    def beta(self, c):
        return self.boundary(c)

    @functools.lru_cache(maxsize=4096)
    def gamma(self, c: float) -> float:
        c = float(c)
        hit = np.flatnonzero(self.boundary.c_grid == c)
        if hit.size:
            return float(self.boundary.values[hit[0]])
        return solve_gamma_star(self.params, c, self.pair)

    def control_boundary(self, c: float) -> float:
        return self.beta(c) if self.reflecting else self.gamma(float(c))

    # -- Sigma -----------------------------------------------------------------
    def _sigma_integrand(self, y):
        b = self.boundary(y)
        return -g_fn(self.params, b, y) * np.exp(-self.pair.log_phi(b))

    def _gl(self, a, b, nodes=_GL_NODES, weights=_GL_WEIGHTS):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        pts = 0.5 * (a + b)[..., None] + half[..., None] * nodes
        vals = self._sigma_integrand(pts.ravel()).reshape(pts.shape)
        return half * (vals @ weights)

    def _build_sigma_table(self):
        grid = self.boundary.c_grid
        pieces = self._gl(grid[:-1], grid[1:])
        check = self._gl(grid[:-1], grid[1:], _GL_NODES_LO, _GL_WEIGHTS_LO)
        err = float(np.max(np.abs(pieces - check)))
        if err > 1e-11 * max(1.0, float(np.max(np.abs(pieces)))):
            raise QuadratureError("Sigma quadrature did not converge", err)
        # tail[i] = integral from grid[i] to 1
        self._sigma_tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])

    def sigma_integral(self, c):
        """Sigma(c) = -int_c^1 G(beta*(y), y) / phi(beta*(y)) dy."""
        if not self.reflecting:
            raise UnsupportedRegimeError("Sigma is defined only in the reflecting regime")
        c = np.asarray(c, dtype=float)
        cf = np.clip(np.atleast_1d(c).ravel(), 0.0, 1.0)
        grid = self.boundary.c_grid
        idx = np.clip(np.searchsorted(grid, cf, side="right") - 1, 0, len(grid) - 2)
        out = self._sigma_tail[idx + 1] + self._gl(cf, grid[idx + 1])
        out = np.where(cf >= 1.0, 0.0, out)
        return out.reshape(c.shape) if c.ndim else float(out[0])

    # -- u (reflecting) ------------------------------------------------------
    def u_value(self, x, c):
        """G(x, c) - G(beta*, c) phi(x)/phi(beta*) above beta*(c), zero below."""
        b = self.beta(c)
        x = np.asarray(x, dtype=float)
        gb = float(g_fn(self.params, b, c))
        val = g_fn(self.params, x, c) - gb * np.exp(self.pair.log_phi(x) - self.pair.log_phi(b))
        out = np.where(x > b, val, 0.0)
        return float(out) if out.ndim == 0 else out

    # -- U ---------------------------------------------------------------------
    def evaluate(self, x, c: float) -> GainEval:
        """U and U_x at points ``x`` (flattened) for a single inventory level."""
        c = float(c)
        xf = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        pv = self.pair.values(xf)
        if self.reflecting:
            U, Ux = self._reflecting_u(xf, c, pv)
        else:
            U, Ux = self._repelling_u(xf, c, pv)
        return GainEval(U, Ux, pv)

    def U_and_Ux(self, x, c):
        ev = self.evaluate(x, c)
        if np.ndim(x) == 0:
            return float(ev.U[0]), float(ev.Ux[0])
        return ev.U.reshape(np.shape(x)), ev.Ux.reshape(np.shape(x))

    def U(self, x, c):
        return self.U_and_Ux(x, c)[0]

    def _effective_c(self, x, c):
        return np.maximum(self.boundary.g_star(x), c)

    def _reflecting_u(self, x, c, pv):
        p = self.params
        lam, th, mu = p.lam, p.theta, p.mu
        ce = self._effective_c(x, c)
        ph = p.phi_pen(ce)
        sig = self.sigma_integral(ce)
        live = sig > 0
        phi_sig = np.zeros_like(x)
        phi_sig[live] = np.exp(pv.log_phi[live] + np.log(sig[live]))
        U = x * (ce - c) + lam / (lam + th) * ph * (x + mu * th / lam) - phi_sig
        Ux = (ce - c) + lam / (lam + th) * ph - pv.rho_phi * phi_sig
        return U, Ux

    def _repelling_u(self, x, c, pv):
        p = self.params
        lam, th, mu = p.lam, p.theta, p.mu
        if c >= 1.0:
            return np.zeros_like(x), np.zeros_like(x)
        g = self.gamma(c)
        ph = float(p.phi_pen(c))
        a = g * (1.0 - c) - lam * ph * ((g - mu) / (lam + th) + mu / lam)
        ratio = np.exp(pv.log_psi - self.pair.log_psi(g))
        low_u = ratio * a + lam * ph * ((x - mu) / (lam + th) + mu / lam)
        low_ux = pv.rho_psi * ratio * a + lam * ph / (lam + th)
        below = x < g
        U = np.where(below, low_u, x * (1.0 - c))
        Ux = np.where(below, low_ux, 1.0 - c)
        return U, Ux

    # -- generator image -------------------------------------------------------
    def generator_image_L(self, x, c, side: str = "auto"):
        """(L_X - lam) U(x, c) in closed form.

        In the repelling regime ``side`` picks the branch at x = gamma*(c):
        "left" or "right"; "auto" uses the left branch strictly below gamma*.
        """
        p = self.params
        lam, th, mu = p.lam, p.theta, p.mu
        c = float(c)
        x = np.asarray(x, dtype=float)
        if self.reflecting:
            ce = self._effective_c(x, c)
            out = (th * mu - (lam + th) * x) * (ce - c) - lam * p.phi_pen(ce) * x
        else:
            left = -lam * x * float(p.phi_pen(c))
            right = (1.0 - c) * (th * (mu - x) - lam * x)
            if side == "left":
                out = left
            elif side == "right":
                out = right
            else:
                out = np.where(x < self.gamma(c), left, right)
        out = np.asarray(out, dtype=float)
        return float(out) if out.ndim == 0 else out

    def jump_delta_L(self, c: float) -> float:
        """L(gamma*+, c) - L(gamma*-, c); positive for c < 1."""
        if self.reflecting:
            raise UnsupportedRegimeError("the generator jump exists only in the repelling regime")
        p = self.params
        c = float(c)
        g = self.gamma(c)
        d = (1.0 - c) * (p.theta * p.mu - (p.lam + p.theta) * g) + p.lam * g * float(p.phi_pen(c))
        if c < 1.0 and not d > 0:
            raise ConsistencyError(f"non-positive generator jump {d} at c={c}")
        return d

    def x0_of_c(self, c: float) -> float:
        """Unique root of L(x, c) + lam P0 (reflecting regime)."""
        if not self.reflecting:
            raise UnsupportedRegimeError("x0(c) is defined here for the reflecting regime")
        c = float(c)
        lp0 = self.params.lam * self.params.p0

        def f(x):
            return self.generator_image_L(x, c) + lp0

        lo, hi = self.params.window(WINDOW_SD)
        for _ in range(8):
            if f(lo) > 0 > f(hi):
                return _brent(f, lo, hi)
            span = hi - lo
            lo, hi = lo - span, hi + span
        raise BracketError("no sign change of L + lam P0", {"c": c})
