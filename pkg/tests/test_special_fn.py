import math

import mpmath as mp
import numpy as np
from scipy.integrate import trapezoid
import pytest
from hypothesis import given, settings, strategies as st

from ou_entry.errors import ValidationError
from ou_entry.special_fn import (FundamentalPair, cylinder_d, gamma_fn, log_cyl_integral,
                                 log_cylinder_d)

from .conftest import fd5


def trapezoid_d(alpha, x, upper=50.0, n=400_001):
    """Brute-force D_alpha(x) = exp(-x^2/4)/Gamma(-alpha) int_0^upper t^(-alpha-1) e^(-t^2/2 - x t) dt."""
    nu = -alpha
    t = np.linspace(0.0, upper, n)
    if nu < 1:
        # t^(nu-1) is singular at 0: substitute t = s^(1/nu)
        s = np.linspace(0.0, upper**nu, n)
        t = s ** (1.0 / nu)
        f = np.exp(-t * t / 2 - x * t) / nu
        return math.exp(-x * x / 4) * trapezoid(f, s) / math.gamma(nu)
    f = t ** (nu - 1) * np.exp(-t * t / 2 - x * t)
    return math.exp(-x * x / 4) * trapezoid(f, t) / math.gamma(nu)


def test_gamma_fn():
    assert gamma_fn(5.0) == pytest.approx(24.0, rel=1e-15)
    assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-15)
    with pytest.raises(ValidationError):
        gamma_fn(0.0)


@pytest.mark.parametrize("alpha", [-0.1, -0.5, -1.0, -2.5, -7.0])
@pytest.mark.parametrize("x", [-12.0, -3.0, 0.0, 1.5, 8.0])
def test_cylinder_d_against_mpmath(alpha, x):
    mp.mp.dps = 30
    ref = float(mp.pcfd(alpha, x))
    assert cylinder_d(alpha, x) == pytest.approx(ref, rel=1e-12)


def test_cylinder_d_trapezoid_oracle():
    for alpha, x in [(-1.0, 0.5), (-2.0, -3.0), (-0.5, 2.0), (-3.5, -11.0)]:
        assert cylinder_d(alpha, x) == pytest.approx(trapezoid_d(alpha, x), rel=1e-8)


def test_cylinder_d_closed_forms():
    xs = np.linspace(-5, 5, 11)
    # D_{-1}(x) = sqrt(pi/2) exp(x^2/4) erfc(x/sqrt 2)
    from scipy.special import erfc
    ref = math.sqrt(math.pi / 2) * np.exp(xs**2 / 4) * erfc(xs / math.sqrt(2))
    np.testing.assert_allclose(cylinder_d(-1.0, xs), ref, rtol=1e-12)


def test_cylinder_d_extreme_arguments_finite():
    lv = log_cylinder_d(-1.3, np.array([-60.0, -30.0, 30.0, 60.0]))
    assert np.all(np.isfinite(lv))
    with pytest.raises(ValidationError):
        cylinder_d(0.5, 1.0)


@settings(max_examples=30, deadline=None)
@given(nu=st.floats(0.05, 20.0), x=st.floats(-25.0, 25.0))
def test_integral_recurrence(nu, x):
    # I(nu + 2) = nu I(nu) - x I(nu + 1): integration by parts
    l0, l1, l2 = (log_cyl_integral(n, np.array([x]))[0] for n in (nu, nu + 1, nu + 2))
    lhs = math.exp(l2 - l1)
    rhs = nu * math.exp(l0 - l1) - x
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9 * (abs(x) + nu))


@pytest.mark.parametrize("rate", [0.5, 1.0, 2.0])
def test_fundamental_pair_ode_residual(kinked, rate):
    pair = FundamentalPair(kinked, rate)
    p = kinked
    h = 2e-3 * p.stationary_sd
    xs = np.linspace(-3, 5, 17)
    for f in (pair.phi, pair.psi):
        d1, d2 = fd5(f, xs, h)
        res = 0.5 * p.sigma**2 * d2 + p.theta * (p.mu - xs) * d1 - rate * f(xs)
        scale = np.maximum(1.0, rate * np.abs(f(xs)))
        assert np.max(np.abs(res) / scale) < 1e-6


def test_pair_monotone_and_positive(kinked):
    pair = FundamentalPair(kinked, 1.0)
    xs = np.linspace(-20, 20, 201)
    v = pair.values(xs)
    assert np.all(np.diff(v.log_phi) < 0) and np.all(np.diff(v.log_psi) > 0)
    assert np.all(v.rho_phi < 0) and np.all(v.rho_psi > 0)


def test_derivatives_match_fd(kinked):
    pair = FundamentalPair(kinked, 1.0)
    xs = np.linspace(-2, 4, 7)
    h = 2e-3 * kinked.stationary_sd
    d1, _ = fd5(pair.phi, xs, h)
    np.testing.assert_allclose(pair.dphi(xs), d1, rtol=1e-8)
    d1, _ = fd5(pair.psi, xs, h)
    np.testing.assert_allclose(pair.dpsi(xs), d1, rtol=1e-8)
    _, d2 = fd5(pair.log_phi, xs, h)
    np.testing.assert_allclose(pair.d2log_phi(xs), d2, rtol=1e-6)


def test_wronskian_scaling(kinked):
    # W(x) = W(mu) exp(theta (x - mu)^2 / sigma^2) for the OU generator
    pair = FundamentalPair(kinked, 1.0)
    xs = np.linspace(-4, 6, 11)
    w = pair.wronskian(xs)
    ref = pair.wronskian(kinked.mu) * np.exp(kinked.theta * (xs - kinked.mu) ** 2 / kinked.sigma**2)
    np.testing.assert_allclose(w, ref, rtol=1e-11)


def test_hitting_weights(kinked):
    pair = FundamentalPair(kinked, 1.0)
    a, b = -1.0, 2.0
    xs = np.linspace(a, b, 7)
    wa, wb = pair.hitting_weights(xs, a, b)
    assert wa[0] == pytest.approx(1.0) and wb[0] == pytest.approx(0.0, abs=1e-14)
    assert wa[-1] == pytest.approx(0.0, abs=1e-14) and wb[-1] == pytest.approx(1.0)
    assert np.all(wa + wb < 1.0 + 1e-14)
    # each weight solves the ODE, so it is a combination of phi and psi
    f1 = pair.f1(b, xs) / pair.f1(b, a)
    np.testing.assert_allclose(wa, f1, rtol=1e-10, atol=1e-14)
