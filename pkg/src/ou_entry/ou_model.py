"""Ornstein-Uhlenbeck path mathematics.

The explicit solution X_t = mu + (x - mu) exp(-theta t) + int_0^t sigma exp(theta (s - t)) dB_s
is Gaussian, so a step of any length can be sampled exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_model import ModelParams
from .errors import ValidationError
from .special_fn import FundamentalPair


@dataclass(frozen=True)
class OUTransition:
    """Exact one-step transition over ``dt``."""

    dt: float
    mu: float
    mean_coeff: float
    step_var: float

    @classmethod
    def from_params(cls, params: ModelParams, dt: float) -> "OUTransition":
        dt = float(dt)
        if not dt > 0:
            raise ValidationError("dt must be positive", ["dt"])
        th = params.theta
        var = params.sigma**2 * -math.expm1(-2.0 * th * dt) / (2.0 * th)
        return cls(dt=dt, mu=params.mu, mean_coeff=math.exp(-th * dt), step_var=var)

    @property
    def step_sd(self) -> float:
        return math.sqrt(self.step_var)


def exact_step(x, trans: OUTransition, z):
    """mu + (x - mu) e^{-theta dt} + sqrt(step_var) z."""
    return trans.mu + (np.asarray(x) - trans.mu) * trans.mean_coeff + trans.step_sd * np.asarray(z)


# central-difference weights for f' and f'' on 3- and 5-point stencils
_STENCILS = {
    3: (np.array([-0.5, 0.0, 0.5]), np.array([1.0, -2.0, 1.0])),
    5: (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0,
        np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0),
}


def derivatives(f_vals, h):
    """First and second central differences from an odd stencil of samples.

    ``f_vals`` has the stencil along its first axis: f(x - k h), ..., f(x + k h).
    """
    f_vals = np.asarray(f_vals, dtype=float)
    try:
        w1, w2 = _STENCILS[f_vals.shape[0]]
    except KeyError:
        raise ValidationError("stencil must have 3 or 5 points", ["f_vals"]) from None
    d1 = np.tensordot(w1, f_vals, axes=1) / h
    d2 = np.tensordot(w2, f_vals, axes=1) / (h * h)
    return d1, d2


def generator_apply(f_vals, x, h, params: ModelParams):
    """Central-difference approximation of (1/2) sigma^2 f'' + theta (mu - x) f'."""
    d1, d2 = derivatives(f_vals, h)
    return 0.5 * params.sigma**2 * d2 + params.theta * (params.mu - np.asarray(x)) * d1


def hitting_laplace(params: ModelParams, x, y, rate, pair: FundamentalPair | None = None):
    """E_x[exp(-rate tau_y)] for the first hitting time of level y."""
    pair = pair if pair is not None else FundamentalPair(params, rate)
    x = np.asarray(x, dtype=float)
    y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
    down = np.exp(pair.log_phi(x) - pair.log_phi(y))
    up = np.exp(pair.log_psi(x) - pair.log_psi(y))
    out = np.where(x >= y, down, up)
    return float(out) if out.ndim == 0 else out
