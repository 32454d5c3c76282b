"""Model parameters, the inventory penalty and regime classification.

The spot price follows dX = theta (mu - X) dt + sigma dB and demand arrives at
an exponential time with intensity ``lam``.  The penalty Phi is a polynomial in
the shortfall (1 - c) without constant term, so Phi(1) = 0 holds exactly.
Other penalty families can be supported by any object exposing ``value``,
``d1``, ``d2`` and ``value_over_gap``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ValidationError

VALIDATION_GRID_SIZE = 1001


@dataclass(frozen=True)
class PenaltySpec:
    """Phi(c) = sum_j coeffs[j-1] * (1 - c)**j, j = 1..n, with n >= 2."""

    coeffs: tuple

    def __init__(self, coeffs: Sequence[float]):
        coeffs = tuple(float(a) for a in coeffs)
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs = coeffs[:-1]
        if len(coeffs) < 2:
            raise ValidationError(
                "penalty must be a polynomial of degree >= 2 in (1 - c)", ["penalty"]
            )
        if not all(math.isfinite(a) for a in coeffs):
            raise ValidationError("penalty coefficients must be finite", ["penalty"])
        object.__setattr__(self, "coeffs", coeffs)
        self._validate()

    def _validate(self):
        c = np.linspace(0.0, 1.0, VALIDATION_GRID_SIZE)[:-1]
        bad = []
        if not np.all(self.value(c) > 0):
            bad.append("Phi > 0")
        if not np.all(self.d1(c) < 0):
            bad.append("Phi' < 0")
        if not np.all(self.d2(c) > 0):
            bad.append("Phi'' > 0")
        if bad:
            raise ValidationError(
                "penalty violates " + ", ".join(bad) + " on [0, 1)", ["penalty"]
            )

    def _poly(self, coeffs, gap):
        out = np.zeros_like(gap, dtype=float)
        for a in reversed(coeffs):
            out = out * gap + a
        return out

    def value(self, c):
        gap = 1.0 - np.asarray(c, dtype=float)
        return gap * self._poly(self.coeffs, gap)

    def value_over_gap(self, c):
        """Phi(c) / (1 - c); finite at c = 1 where it equals -Phi'(1)."""
        gap = 1.0 - np.asarray(c, dtype=float)
        return self._poly(self.coeffs, gap)

    def d1(self, c):
        gap = 1.0 - np.asarray(c, dtype=float)
        dc = [j * a for j, a in enumerate(self.coeffs, start=1)]
        return -self._poly(dc, gap)

    def d2(self, c):
        gap = 1.0 - np.asarray(c, dtype=float)
        dc = [j * (j + 1) * a for j, a in enumerate(self.coeffs[1:], start=1)]
        return self._poly(dc, gap)


class RegimeKind(str, enum.Enum):
    REFLECTING = "Reflecting"
    REPELLING = "Repelling"
    UNSUPPORTED = "Unsupported"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    chat: Optional[float] = None  # root of k, diagnostics only

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class ReferencePoints:
    """Reference abscissae at a fixed inventory; ``None`` where undefined."""

    x0: Optional[float] = None
    xhat0: Optional[float] = None
    xbar0: Optional[float] = None
    xtilde: Optional[float] = None
    x1_0: Optional[float] = None
    x2_0: Optional[float] = None
    xdag0: Optional[float] = None

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _scalar(v):
    return float(v)


@dataclass(frozen=True)
class ModelParams:
    mu: float
    theta: float
    sigma: float
    lam: float
    p0: float
    penalty: PenaltySpec = field(
        default_factory=lambda: PenaltySpec([2.2, 8.0])
    )

    def __post_init__(self):
        bad = []
        for name in ("mu", "theta", "sigma", "lam", "p0"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                bad.append(name)
        for name in ("theta", "sigma", "lam"):
            if name not in bad and not getattr(self, name) > 0:
                bad.append(name)
        if bad:
            raise ValidationError(
                "invalid model parameters: " + ", ".join(bad), bad
            )
        for name in ("mu", "theta", "sigma", "lam", "p0"):
            object.__setattr__(self, name, float(getattr(self, name)))

    # -- scale helpers -------------------------------------------------------
    @property
    def stationary_sd(self) -> float:
        return self.sigma / math.sqrt(2.0 * self.theta)

    def window(self, n_sd: float = 40.0):
        """Finite stand-in for (-inf, +inf): mu -/+ n_sd stationary sd."""
        s = n_sd * self.stationary_sd
        return self.mu - s, self.mu + s

    # -- penalty-derived scalar functions ------------------------------------
    def phi_pen(self, c):
        return self.penalty.value(c)

    def k(self, c):
        """lam + theta + lam * Phi'(c)."""
        return self.lam + self.theta + self.lam * self.penalty.d1(c)

    def zeta(self, c):
        """(lam + theta)(1 - c) - lam * Phi(c), the integral of k over [c, 1]."""
        c = np.asarray(c, dtype=float)
        return (self.lam + self.theta) * (1.0 - c) - self.lam * self.penalty.value(c)

    def zeta_over_gap(self, c):
        return (self.lam + self.theta) - self.lam * self.penalty.value_over_gap(c)

    def classify_regime(self) -> Regime:
        k0, k1 = _scalar(self.k(0.0)), _scalar(self.k(1.0))
        if k0 > 0 and k1 > 0:
            kind = RegimeKind.REFLECTING
        elif k0 < 0 and k1 < 0:
            kind = RegimeKind.REPELLING
        else:
            kind = RegimeKind.UNSUPPORTED
        return Regime(kind, self._find_chat(kind))

    def _find_chat(self, kind, span=1.0e3):
        f = lambda c: _scalar(self.k(c))
        if kind is RegimeKind.REFLECTING:
            a, b = -span, 0.0
        elif kind is RegimeKind.REPELLING:
            a, b = 1.0, 1.0 + span
        else:
            a, b = 0.0, 1.0
        fa, fb = f(a), f(b)
        if fa == 0.0:
            return a
        if fb == 0.0:
            return b
        if fa * fb > 0:
            return None
        return brentq(f, a, b, xtol=1e-14, rtol=1e-14)

    def reference_points(self, c: float) -> ReferencePoints:
        c = float(c)
        mu, th, lam, p0 = self.mu, self.theta, self.lam, self.p0
        k = _scalar(self.k(c))
        z = _scalar(self.zeta(c))
        ph = _scalar(self.phi_pen(c))
        dph = _scalar(self.penalty.d1(c))
        out = {}
        if k != 0.0:
            out["x0"] = -th * mu * dph / k
            out["xhat0"] = th * mu / k
        if z != 0.0:
            out["xbar0"] = th * mu * ph / z
            out["xtilde"] = th * mu * (1.0 - c) / z
        if ph != 0.0:
            out["x1_0"] = p0 / ph
            out["xdag0"] = mu + (p0 - mu * ph) * (lam + th) / (lam * ph)
        if c != 1.0:
            out["x2_0"] = (th * mu * (1.0 - c) + lam * p0) / ((lam + th) * (1.0 - c))
        return ReferencePoints(**out)


KINKED_PARAMS = dict(mu=1.0, theta=1.0, sigma=3.0, lam=1.0, p0=4.0)
KINKED_PENALTY = (2.2, 8.0)


def kinked_entry_model() -> ModelParams:
    """Parameter set behind the kinked entry region example."""
    return ModelParams(penalty=PenaltySpec(KINKED_PENALTY), **KINKED_PARAMS)


def reflecting_example_model(p0: float = 0.1) -> ModelParams:
    """Small convex penalty, k > 0 on [0, 1]."""
    return ModelParams(mu=1.0, theta=1.0, sigma=1.0, lam=1.0, p0=p0,
                       penalty=PenaltySpec([0.1, 0.1]))
