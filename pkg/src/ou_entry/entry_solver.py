"""Optimal entry: when to pay the premium P0 and start the investment problem.

The entry problem is a pure stopping problem with payoff U - P0,

    V(x, c) = inf_tau E[exp(-lam tau) (U(X_tau, c) - P0)].

Geometrically, with F = psi/phi and calF = (U - P0)/phi, the map
y -> V/phi at F^{-1}(y) is the largest non-positive convex minorant of
H = calF o F^{-1}.  A single entry threshold is therefore the minimiser of
calF, and a disconnected stopping set arises when calF has two competing
local minima; the lower pair of boundaries is then the bitangent of H.

Reflecting regime: the threshold is alpha*(c) (auxiliary problem) above the
crossing level c*, and the root of Hhat = (U - P0) phi' - U_x phi below x0(c)
under it.
Repelling regime: cases I, II and IIIa have one threshold; IIIb has three.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import _backend
from .core_model import ModelParams
from .errors import (BracketError, ConsistencyError, ConvergenceError,
                     MultipleRootsError, UnsupportedRegimeError)
from .investment_value import (DEFAULT_GRID, ROOT_XTOL, WINDOW_SD, GainFunction,
                               solve_beta_star, walk_to_sign_change)

SCAN_POINTS = 65
TIE_RTOL = 1e-10


class Topology(str, enum.Enum):
    SINGLE = "SingleThreshold"
    TRIPLE = "TripleBoundary"
    TRIVIAL = "StopNowTrivial"


class CaseTag(str, enum.Enum):
    REFLECTING_ALPHA = "c>=c*"
    REFLECTING_HHAT = "c<c*"
    I = "I"
    II = "II"
    IIIA = "IIIa"
    IIIB = "IIIb"
    TRIVIAL = "c=1"


@dataclass(frozen=True)
class EntryBoundary:
    """Entry boundaries at one inventory level."""

    c: float
    topology: Topology
    case: CaseTag
    l1: Optional[float] = None
    l2: Optional[float] = None
    l3: Optional[float] = None
    control: Optional[float] = None  # beta*(c) or gamma*(c)
    m1: Optional[float] = None
    m2: Optional[float] = None
    residuals: dict = field(default_factory=dict)

    def stop_mask(self, x):
        """Boolean mask of the stopping set at ``x``."""
        x = np.asarray(x, dtype=float)
        if self.topology is Topology.TRIVIAL:
            return np.ones(x.shape, dtype=bool)
        mask = x <= self.l1
        if self.topology is Topology.TRIPLE:
            mask = mask | ((x >= self.l2) & (x <= self.l3))
        return mask


@dataclass
class EntryBoundarySet:
    """Entry boundaries on a c-grid plus the regime-level diagnostics."""

    params: ModelParams
    rows: list
    c_star: Optional[float] = None

    def row(self, c: float) -> EntryBoundary:
        for r in self.rows:
            if r.c == c:
                return r
        raise KeyError(c)

    @property
    def c_values(self):
        return np.array([r.c for r in self.rows])


def _brent(f, a, b):
    return brentq(f, a, b, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)


class EntrySolver:
    """Solves the entry problem for every regime the control problem supports."""

    def __init__(self, params: ModelParams, n_grid: int = DEFAULT_GRID,
                 gain: Optional[GainFunction] = None):
        self.params = params
        self.gain = gain or GainFunction(params, n_grid)
        self.pair = self.gain.pair
        self.reflecting = self.gain.reflecting
        self._c_star_cache = None

    # ------------------------------------------------------------------
    # building blocks
    # ------------------------------------------------------------------
    @property
    def lower_limit(self) -> float:
        return self.params.mu - WINDOW_SD * self.params.stationary_sd

    def script_f(self, x, c):
        """calF = (U - P0)/phi."""
        ev = self.gain.evaluate(x, c)
        out = (ev.U - self.params.p0) * np.exp(-ev.pv.log_phi)
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    def hhat_scaled(self, x, c):
        """Hhat/phi = (U - P0) phi'/phi - U_x; same sign as Hhat."""
        ev = self.gain.evaluate(x, c)
        out = (ev.U - self.params.p0) * ev.pv.rho_phi - ev.Ux
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    def hhat_residual(self, x, c):
        """Hhat(x, c) = (U - P0) phi' - U_x phi."""
        ev = self.gain.evaluate(x, c)
        out = ((ev.U - self.params.p0) * ev.pv.rho_phi - ev.Ux) * np.exp(ev.pv.log_phi)
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    def smooth_fit_residual(self, x, c):
        """Relative residual of (U - P0) phi'/phi = U_x."""
        ev = self.gain.evaluate(x, c)
        a = (ev.U - self.params.p0) * ev.pv.rho_phi
        out = (a - ev.Ux) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(ev.Ux)))
        return float(out[0]) if np.ndim(x) == 0 else out

    # ------------------------------------------------------------------
    # reflecting regime
    # ------------------------------------------------------------------
    def _require(self, reflecting: bool):
        if self.reflecting != reflecting:
            want = "reflecting" if reflecting else "repelling"
            raise UnsupportedRegimeError(f"operation needs the {want} regime")

    def _ghat(self, x, c):
        p = self.params
        ph = float(p.phi_pen(c))
        return p.mu * ph + (np.asarray(x) - p.mu) * p.lam * ph / (p.lam + p.theta)

    def _xdag(self, c):
        return self.params.reference_points(c).xdag0

    def solve_alpha_star(self, c: float) -> float:
        """Smooth-fit root of the auxiliary problem, below min(x_dag0, P0/Phi)."""
        self._require(True)
        p = self.params
        c = float(c)
        if c >= 1.0:
            return math.inf
        ph = float(p.phi_pen(c))
        upper = min(self._xdag(c), p.p0 / ph)
        kk = p.lam * ph / (p.lam + p.theta)

        def f(a):
            return -kk + (float(self._ghat(a, c)) - p.p0) * self.pair.dlog_phi(a)

        sd = p.stationary_sd
        br = walk_to_sign_change(f, upper, -1.0, 0.05 * sd, upper - 4 * WINDOW_SD * sd)
        if br is None:
            raise BracketError("no sign change for the alpha* equation", {"c": c})
        return _brent(f, *sorted(br))

    def gamma_small(self, x, c: float, alpha: Optional[float] = None):
        """Auxiliary value Gamma(x, c) with the optimal threshold alpha*(c)."""
        self._require(True)
        p = self.params
        a = self.solve_alpha_star(c) if alpha is None else alpha
        x = np.asarray(x, dtype=float)
        ratio = np.exp(self.pair.log_phi(x) - self.pair.log_phi(a))
        val = (p.p0 - self._ghat(x, c)) - (p.p0 - float(self._ghat(a, c))) * ratio
        out = np.where(x > a, val, 0.0)
        return float(out) if out.ndim == 0 else out

    def find_c_star(self) -> Optional[float]:
        """Crossing of the increasing alpha* and the decreasing beta*."""
        self._require(True)
        if self._c_star_cache is not None:
            return self._c_star_cache[0]
        grid = self.gain.boundary.c_grid[:-1]
        betas = self.gain.boundary.values[:-1]
        alphas = np.array([self.solve_alpha_star(c) for c in grid])
        diff = betas - alphas
        flips = np.flatnonzero(np.sign(diff[:-1]) != np.sign(diff[1:]))
        if flips.size > 1:
            raise MultipleRootsError("beta* - alpha* changes sign more than once",
                                     [0.5 * (grid[i] + grid[i + 1]) for i in flips])
        if flips.size == 0 or diff[0] <= 0:
            c_star = None
        else:
            i = flips[0]
            f = lambda c: solve_beta_star(self.params, c, self.pair) - self.solve_alpha_star(c)
            c_star = brentq(f, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        self._c_star_cache = (c_star,)
        return c_star

    def solve_entry_reflecting(self, c: float) -> EntryBoundary:
        self._require(True)
        c = float(c)
        beta = self.gain.beta(c)
        if c >= 1.0:
            return EntryBoundary(c, Topology.TRIVIAL, CaseTag.TRIVIAL, control=beta)
        c_star = self.find_c_star()
        alpha = self.solve_alpha_star(c)
        if c_star is None or c >= c_star:
            row = EntryBoundary(c, Topology.SINGLE, CaseTag.REFLECTING_ALPHA,
                                l1=alpha, control=beta)
        else:
            x0 = self.gain.x0_of_c(c)
            ell = self._unique_hhat_root(c, self.lower_limit, x0)
            row = EntryBoundary(c, Topology.SINGLE, CaseTag.REFLECTING_HHAT,
                                l1=ell, control=beta)
        res = {"smooth_fit_l1": self.smooth_fit_residual(row.l1, c)}
        return replace(row, residuals=res)

    def _unique_hhat_root(self, c, lo, hi):
        """The root of Hhat in (lo, hi); several sign changes are an error."""
        xs = self._scan_grid(lo, hi)
        h = self.hhat_scaled(xs, c)
        flips = np.flatnonzero(np.sign(h[:-1]) != np.sign(h[1:]))
        if flips.size == 0:
            raise BracketError("Hhat has no sign change below x0(c)", {"c": c, "hi": hi})
        if flips.size > 1:
            roots = [_brent(lambda x: self.hhat_scaled(x, c), xs[i], xs[i + 1]) for i in flips]
            raise MultipleRootsError("Hhat has several roots below x0(c)", roots)
        i = flips[0]
        return _brent(lambda x: self.hhat_scaled(x, c), xs[i], xs[i + 1])

    # ------------------------------------------------------------------
    # repelling regime
    # ------------------------------------------------------------------
    def _scan_grid(self, lo, hi):
        """Coarse grid on [lo, hi], dense within 12 sd of ``hi``."""
        sd = self.params.stationary_sd
        near = max(lo, hi - 12.0 * sd)
        far = np.linspace(lo, near, 17)[:-1] if near > lo else np.empty(0)
        return np.concatenate([far, np.linspace(near, hi, SCAN_POINTS)])

    def _argmin_f(self, c, lo, hi):
        """Minimiser of calF over [lo, hi]: coarse scan, golden section, Brent polish.

        calF is unimodal on each piece where it is used, and calF' has the
        sign of -Hhat, so an endpoint is the minimiser only when Hhat points
        outward there.  Returns ``(x_min, f_min, interior)``.
        """
        f = lambda x: self.script_f(x, c)
        g = lambda x: self.hhat_scaled(x, c)
        xs = self._scan_grid(lo, hi)
        fs = self.script_f(xs, c)
        i = int(np.argmin(fs))
        n = xs.size
        if i == n - 1:
            if g(hi) >= 0:
                return hi, fs[i], False
            return self._polish_min(c, xs[i - 1], hi)
        if i == 0:
            if g(lo) <= 0:
                return lo, fs[i], False
            return self._polish_min(c, lo, xs[1])
        res = minimize_scalar(f, bracket=(xs[i - 1], xs[i], xs[i + 1]), method="golden")
        xg = float(res.x)
        # polish on the smooth-fit equation (calF' = 0 <=> Hhat = 0)
        step = 1e-6 * self.params.stationary_sd
        a, b = max(xs[i - 1], xg - step), min(xs[i + 1], xg + step)
        while g(a) * g(b) > 0:
            if a == xs[i - 1] and b == xs[i + 1]:
                return xg, f(xg), True
            step *= 4.0
            a, b = max(xs[i - 1], xg - step), min(xs[i + 1], xg + step)
        xr = _brent(g, a, b)
        return xr, f(xr), True

    def _polish_min(self, c, a, b):
        g = lambda x: self.hhat_scaled(x, c)
        xr = _brent(g, a, b)
        return xr, self.script_f(xr, c), True

    def classify_repelling_case(self, c: float):
        """Case tag and the minima (m1, m2) with their minimisers.

        Returns ``(tag, info)`` where ``info`` holds gamma, x1_0, x2_0 and,
        in case III, m1, m2, x_m1, x_m2.
        """
        self._require(False)
        c = float(c)
        ref = self.params.reference_points(c)
        g = self.gain.gamma(c)
        x1, x2 = ref.x1_0, ref.x2_0
        info = {"gamma": g, "x1_0": x1, "x2_0": x2}
        if g >= x2:
            return CaseTag.I, info
        if g <= x1:
            return CaseTag.II, info
        xm1, m1, _ = self._argmin_f(c, self.lower_limit, x1)
        xm2, m2, _ = self._argmin_f(c, g, x2)
        info.update(m1=m1, m2=m2, x_m1=xm1, x_m2=xm2)
        if abs(m1 - m2) <= TIE_RTOL * abs(m1):
            # near tie: check the pointwise condition on a fine grid
            fine = np.linspace(g, x2, 2049)
            tag = CaseTag.IIIA if np.all(self.script_f(fine, c) > m1) else CaseTag.IIIB
            return tag, info
        return (CaseTag.IIIA if m1 < m2 else CaseTag.IIIB), info

    def solve_entry_repelling(self, c: float) -> EntryBoundary:
        self._require(False)
        c = float(c)
        if c >= 1.0:
            return EntryBoundary(c, Topology.TRIVIAL, CaseTag.TRIVIAL,
                                 control=self.gain.gamma(1.0))
        tag, info = self.classify_repelling_case(c)
        g = info["gamma"]
        if tag is CaseTag.I or tag is CaseTag.IIIA:
            upper = info["x1_0"]
        elif tag is CaseTag.II:
            upper = info["x2_0"]
        else:
            return self._solve_triple(c, info)
        if "x_m1" in info and tag is CaseTag.IIIA:
            ell = info["x_m1"]
        else:
            ell, _, _ = self._argmin_f(c, self.lower_limit, upper)
        res = {"smooth_fit_l1": self.smooth_fit_residual(ell, c)}
        return EntryBoundary(c, Topology.SINGLE, tag, l1=ell, control=g,
                             m1=info.get("m1"), m2=info.get("m2"), residuals=res)

    # -- triple boundary ------------------------------------------------------
    def triple_residuals(self, c, x, y, z=None):
        """Relative residuals of the three-boundary system.

        The F1/F2 ratios are rewritten through r = F(x)/F(y) and the
        logarithms of phi and psi so that nothing overflows.
        """
        p0 = self.params.p0
        pts = [x, y] if z is None else [x, y, z]
        ev = self.gain.evaluate(np.array(pts), c)
        ux, uy = ev.U[0] - p0, ev.U[1] - p0
        dux, duy = ev.Ux[0], ev.Ux[1]
        lp, ls = ev.pv.log_phi, ev.pv.log_psi
        rp, rs = ev.pv.rho_phi, ev.pv.rho_psi
        r = math.exp((ls[0] - lp[0]) - (ls[1] - lp[1]))
        psi_xy = math.exp(ls[0] - ls[1])
        phi_yx = math.exp(lp[1] - lp[0])
        t1 = ux * (r * rs[0] - rp[0]) / (r - 1.0)
        t2 = uy * psi_xy * (rs[0] - rp[0]) / (r - 1.0)
        e2 = (t1 - t2 - dux) / max(1.0, abs(t1), abs(t2), abs(dux))
        s1 = ux * phi_yx * (rs[1] - rp[1]) / (r - 1.0)
        s2 = uy * (rs[1] - r * rp[1]) / (r - 1.0)
        e3 = (s1 - s2 - duy) / max(1.0, abs(s1), abs(s2), abs(duy))
        out = {"prob_ii": e2, "prob_iii": e3}
        if z is not None:
            a = (ev.U[2] - p0) * rp[2]
            out["prob_i"] = (a - ev.Ux[2]) / max(1.0, abs(a), abs(ev.Ux[2]))
        return out

    def _tangent_point(self, c, s, lo, hi):
        """Point of [lo, hi] where calF - s F is minimal (s < 0)."""
        p0 = self.params.p0

        def d(x):
            ev = self.gain.evaluate(x, c)
            hh = (ev.U[0] - p0) * ev.pv.rho_phi[0] - ev.Ux[0]
            w = math.exp(ev.pv.log_psi[0]) * (ev.pv.rho_psi[0] - ev.pv.rho_phi[0])
            return -hh - s * w

        d_lo, d_hi = d(lo), d(hi)
        if d_lo >= 0:
            return lo
        if d_hi <= 0:
            return hi
        return _brent(d, lo, hi)

    def _intercept(self, c, s, x):
        return self.script_f(x, c) - s * float(self.pair.f_ratio(x))

    def _bitangent_by_slope(self, c, info, z):
        """Bisection on the common tangent slope of the two convex pieces.

        The intercept difference b1(s) - b2(s) is increasing in s, positive
        at s = 0 (m1 > m2) and negative for steep slopes.
        """
        g = info["gamma"]
        left_lo, left_hi = self.lower_limit, info["x_m1"]

        def pts(s):
            return (self._tangent_point(c, s, left_lo, left_hi),
                    self._tangent_point(c, s, g, z))

        def diff(s):
            a, b = pts(s)
            return self._intercept(c, s, a) - self._intercept(c, s, b)

        fm1 = float(self.pair.f_ratio(info["x_m1"]))
        fz = float(self.pair.f_ratio(z))
        s_lo = (info["m2"] - info["m1"]) / (fz - fm1)
        for _ in range(200):
            if diff(s_lo) < 0:
                break
            s_lo *= 2.0
        else:
            raise ConvergenceError("could not bracket the bitangent slope")
        s = brentq(diff, s_lo, 0.0, xtol=1e-300, rtol=1e-15, maxiter=300)
        return pts(s)

    def _newton_pair(self, c, x, y, lo_box, hi_box, max_iter=40):
        """Damped Newton on the two smooth-fit residuals for (l1, l2)."""
        trace = []

        def res(v):
            r = self.triple_residuals(c, v[0], v[1])
            return np.array([r["prob_ii"], r["prob_iii"]])

        v = np.array([x, y], dtype=float)
        fv = res(v)
        trace.append((v.copy(), float(np.max(np.abs(fv)))))
        for _ in range(max_iter):
            if np.max(np.abs(fv)) <= 1e-12:
                return v, trace
            h = 1e-7 * self.params.stationary_sd
            jac = np.empty((2, 2))
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                jac[:, j] = (res(v + e) - res(v - e)) / (2 * h)
            try:
                step = np.linalg.solve(jac, -fv)
            except np.linalg.LinAlgError:
                break
            lam = 1.0
            while lam > 1e-6:
                cand = v + lam * step
                if np.all(cand > lo_box) and np.all(cand < hi_box):
                    fc = res(cand)
                    if np.max(np.abs(fc)) < np.max(np.abs(fv)):
                        v, fv = cand, fc
                        break
                lam *= 0.5
            else:
                break
            trace.append((v.copy(), float(np.max(np.abs(fv)))))
        if np.max(np.abs(fv)) <= 1e-9:
            return v, trace
        raise ConvergenceError("Newton on the boundary pair did not converge", trace)

    def _solve_triple(self, c, info):
        g, x1 = info["gamma"], info["x1_0"]
        z = info["x_m2"]
        lo_box = np.array([self.lower_limit, g])
        hi_box = np.array([x1, z])
        method = "newton"
        try:
            v, _ = self._newton_pair(c, info["x_m1"], 0.5 * (g + z), lo_box, hi_box)
        except ConvergenceError:
            method = "slope-bisection"
            x, y = self._bitangent_by_slope(c, info, z)
            try:
                v, _ = self._newton_pair(c, x, y, lo_box, hi_box, max_iter=5)
            except ConvergenceError:
                v = np.array([x, y])
        l1, l2 = float(v[0]), float(v[1])
        res = self.triple_residuals(c, l1, l2, z)
        res["method"] = method
        row = EntryBoundary(c, Topology.TRIPLE, CaseTag.IIIB, l1=l1, l2=l2, l3=z,
                            control=g, m1=info["m1"], m2=info["m2"], residuals=res)
        check_row(self.params, row)
        return row

    # ------------------------------------------------------------------
    # dispatch, grid and value
    # ------------------------------------------------------------------
    def solve(self, c: float) -> EntryBoundary:
        if self.reflecting:
            return self.solve_entry_reflecting(c)
        return self.solve_entry_repelling(c)

    def solve_grid(self, c_values=None, threads: Optional[int] = None) -> EntryBoundarySet:
        cs = self.gain.boundary.c_grid if c_values is None else np.asarray(c_values, float)
        c_star = self.find_c_star() if self.reflecting else None
        n = threads or _backend.thread_count()
        if n > 1 and len(cs) > 1:
            with ThreadPoolExecutor(max_workers=n) as pool:
                rows = list(pool.map(self.solve, cs))
        else:
            rows = [self.solve(c) for c in cs]
        return EntryBoundarySet(self.params, rows, c_star)

    def entry_value_V(self, x, c: float, row: Optional[EntryBoundary] = None):
        """Entry value V(x, c) assembled from the boundaries at c."""
        c = float(c)
        row = row or self.solve(c)
        p0 = self.params.p0
        x = np.asarray(x, dtype=float)
        xf = np.atleast_1d(x).ravel()
        if row.topology is Topology.TRIVIAL:
            out = np.full(xf.shape, -p0)
            return out.reshape(x.shape) if x.ndim else float(out[0])
        stop_val = self.gain.evaluate(xf, c).U - p0
        lphi = self.pair.log_phi(xf)
        if row.topology is Topology.SINGLE:
            u_l = self.gain.U(row.l1, c) - p0
            cont = u_l * np.exp(lphi - self.pair.log_phi(row.l1))
            out = np.where(xf <= row.l1, stop_val, cont)
        else:
            u1 = self.gain.U(row.l1, c) - p0
            u2 = self.gain.U(row.l2, c) - p0
            u3 = self.gain.U(row.l3, c) - p0
            upper = u3 * np.exp(lphi - self.pair.log_phi(row.l3))
            mid = (xf > row.l1) & (xf < row.l2)
            between = np.zeros_like(xf)
            if mid.any():
                wa, wb = self.pair.hitting_weights(xf[mid], row.l1, row.l2)
                between[mid] = u1 * wa + u2 * wb
            out = np.where(xf <= row.l1, stop_val,
                           np.where(mid, between,
                                    np.where(xf <= row.l3, stop_val, upper)))
        return out.reshape(x.shape) if x.ndim else float(out[0])


def check_row(params: ModelParams, row: EntryBoundary, gain: Optional[GainFunction] = None):
    """Box constraints of the reported topology; raises ConsistencyError."""
    if row.topology is not Topology.TRIPLE:
        return
    ref = params.reference_points(row.c)
    g = row.control
    ok = (row.l1 < ref.x1_0 and g < row.l2 <= row.l3 < ref.x2_0)
    if not ok:
        raise ConsistencyError(
            f"triple boundary at c={row.c} violates l1 < x1_0, gamma < l2 <= l3 < x2_0: "
            f"{row.l1}, {row.l2}, {row.l3} with gamma={g}, x1_0={ref.x1_0}, x2_0={ref.x2_0}")
