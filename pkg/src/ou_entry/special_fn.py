"""Gamma, parabolic cylinder functions and the OU fundamental solutions.

Everything is built on the single integral

    I(nu, x) = int_0^inf t**(nu - 1) exp(-t**2/2 - x t) dt ,   nu > 0,

through the identities

    D_alpha(x) = exp(-x**2/4) I(-alpha, x) / Gamma(-alpha)             (alpha < 0)
    phi(x)     = I(nu,  z) / Gamma(nu),   psi(x) = I(nu, -z) / Gamma(nu)
    phi'(x)    = -I(nu + 1,  z) / (s Gamma(nu))
    psi'(x)    = +I(nu + 1, -z) / (s Gamma(nu))

with nu = rate / theta, s = sigma / sqrt(2 theta) and z = (x - mu) / s.  The
exponential prefactor exp(theta (x - mu)**2 / (2 sigma**2)) of the fundamental
solutions cancels the Gaussian factor of D exactly, so no large intermediate
numbers appear.  The derivative formula follows from differentiating under
the integral sign, d/dz I(nu, z) = -I(nu + 1, z).

Values are returned both plainly and as logarithms; the solvers work with the
logarithms and logarithmic derivatives, since phi grows like exp(z**2/2) for
z -> -inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .core_model import ModelParams
from .errors import ValidationError


def gamma_fn(z):
    """Euler's Gamma function for z > 0."""
    z = float(z)
    if not z > 0:
        raise ValidationError("gamma_fn needs z > 0", ["z"])
    return math.gamma(z)


def log_cyl_integral(nu, x):
    """log I(nu, x), vectorised in ``x``."""
    out, _ = _backend.log_cyl_integral(float(nu), np.asarray(x, dtype=float))
    return out


def _shape_like(x, arr):
    return arr.reshape(np.shape(x)) if np.ndim(x) else float(arr[0])


def log_cylinder_d(alpha, x):
    """log D_alpha(x) for alpha < 0."""
    alpha = float(alpha)
    if not alpha < 0:
        raise ValidationError("cylinder_d needs alpha < 0", ["alpha"])
    xa = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    out = -0.25 * xa * xa + log_cyl_integral(-alpha, xa) - math.lgamma(-alpha)
    return _shape_like(x, out)


def cylinder_d(alpha, x):
    """Parabolic cylinder function D_alpha(x) for alpha < 0 and real x."""
    out = np.exp(log_cylinder_d(alpha, x))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PairValues:
    """phi and psi with their logarithmic derivatives at a set of points."""

    log_phi: np.ndarray
    log_psi: np.ndarray
    rho_phi: np.ndarray  # phi'/phi < 0
    rho_psi: np.ndarray  # psi'/psi > 0

    @property
    def log_f(self):
        return self.log_psi - self.log_phi


class FundamentalPair:
    """Decreasing (phi) and increasing (psi) solutions of L_X f = rate f."""

    def __init__(self, params: ModelParams, rate: float):
        rate = float(rate)
        if not rate > 0:
            raise ValidationError("rate must be positive", ["rate"])
        self.params = params
        self.rate = rate
        self.nu = rate / params.theta
        self.scale = params.stationary_sd
        self._log_norm = math.lgamma(self.nu)

    # -- internals -----------------------------------------------------------
    def _z(self, x):
        return (np.atleast_1d(np.asarray(x, dtype=float)).ravel() - self.params.mu) / self.scale

    def _log_i(self, nu, z):
        return log_cyl_integral(nu, z)

    def values(self, x) -> PairValues:
        """All four quantities at ``x`` (flattened)."""
        z = self._z(x)
        zz = np.concatenate([z, -z])
        l0 = self._log_i(self.nu, zz)
        l1 = self._log_i(self.nu + 1.0, zz)
        n = z.size
        rho = np.exp(l1 - l0) / self.scale
        return PairValues(
            log_phi=l0[:n] - self._log_norm,
            log_psi=l0[n:] - self._log_norm,
            rho_phi=-rho[:n],
            rho_psi=rho[n:],
        )

    # -- logarithms ---------------------------------------------------------
    def log_phi(self, x):
        return _shape_like(x, self._log_i(self.nu, self._z(x)) - self._log_norm)

    def log_psi(self, x):
        return _shape_like(x, self._log_i(self.nu, -self._z(x)) - self._log_norm)

    def dlog_phi(self, x):
        """phi'/phi."""
        z = self._z(x)
        r = -np.exp(self._log_i(self.nu + 1.0, z) - self._log_i(self.nu, z)) / self.scale
        return _shape_like(x, r)

    def dlog_psi(self, x):
        """psi'/psi."""
        z = -self._z(x)
        r = np.exp(self._log_i(self.nu + 1.0, z) - self._log_i(self.nu, z)) / self.scale
        return _shape_like(x, r)

    # -- plain values -------------------------------------------------------
    def phi(self, x):
        return np.exp(self.log_phi(x))

    def psi(self, x):
        return np.exp(self.log_psi(x))

    def dphi(self, x):
        z = self._z(x)
        out = -np.exp(self._log_i(self.nu + 1.0, z) - self._log_norm) / self.scale
        return _shape_like(x, out)

    def dpsi(self, x):
        z = -self._z(x)
        out = np.exp(self._log_i(self.nu + 1.0, z) - self._log_norm) / self.scale
        return _shape_like(x, out)

    def d2log_phi(self, x, rho=None):
        """(phi'/phi)' from the ODE: phi''/phi - (phi'/phi)**2."""
        rho = self.dlog_phi(x) if rho is None else rho
        p = self.params
        x = np.asarray(x, dtype=float)
        return 2.0 * (self.rate - p.theta * (p.mu - x) * rho) / p.sigma**2 - rho * rho

    # -- combinations ---------------------------------------------------------
    def f_ratio(self, x):
        """F = psi / phi, strictly increasing."""
        return np.exp(self.log_f(x))

    def log_f(self, x):
        v = self.values(x)
        return _shape_like(x, v.log_f)

    def f1(self, xi, zeta):
        """psi(xi) phi(zeta) - psi(zeta) phi(xi)."""
        return (np.exp(self.log_psi(xi) + self.log_phi(zeta))
                - np.exp(self.log_psi(zeta) + self.log_phi(xi)))

    def f2(self, xi, zeta):
        """psi'(xi) phi(zeta) - psi(zeta) phi'(xi)."""
        return self.dpsi(xi) * self.phi(zeta) - self.psi(zeta) * self.dphi(xi)

    def wronskian(self, x):
        """psi' phi - psi phi' (positive)."""
        v = self.values(x)
        w = np.exp(v.log_phi + v.log_psi) * (v.rho_psi - v.rho_phi)
        return _shape_like(x, w)

    def hitting_weights(self, x, a, b):
        """Discounted exit weights of (a, b) started at a <= x <= b.

        Returns ``(w_a, w_b)`` with w_a = E[exp(-rate tau); X_tau = a] and
        w_b = E[exp(-rate tau); X_tau = b], tau the exit time of (a, b).
        """
        va, vb = self.values(a), self.values(b)
        vx = self.values(x)
        la_phi, la_psi = va.log_phi[0], va.log_psi[0]
        lb_phi, lb_psi = vb.log_phi[0], vb.log_psi[0]
        # divide numerator and denominator of each ratio by psi(b) phi(a)
        den = np.exp(la_psi + lb_phi - lb_psi - la_phi) - 1.0
        w_a = (np.exp(vx.log_psi + lb_phi - lb_psi - la_phi)
               - np.exp(vx.log_phi - la_phi)) / den
        w_b = (np.exp(la_psi + vx.log_phi - lb_psi - la_phi)
               - np.exp(vx.log_psi - lb_psi)) / den
        return _shape_like(x, w_a), _shape_like(x, w_b)


def fundamental_pair(params: ModelParams, rate: float) -> FundamentalPair:
    return FundamentalPair(params, rate)
