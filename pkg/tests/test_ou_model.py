import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ou_entry.errors import ValidationError
from ou_entry.ou_model import (OUTransition, derivatives, exact_step, generator_apply,
                               hitting_laplace)


def test_transition_moments(kinked):
    tr = OUTransition.from_params(kinked, 0.5)
    assert tr.mean_coeff == pytest.approx(math.exp(-0.5))
    assert tr.step_var == pytest.approx(9 * (1 - math.exp(-1.0)) / 2)
    with pytest.raises(ValidationError):
        OUTransition.from_params(kinked, 0.0)


def test_exact_step_distribution(kinked):
    tr = OUTransition.from_params(kinked, 0.3)
    rng = np.random.default_rng(0)
    z = rng.standard_normal(200_000)
    x1 = exact_step(2.0, tr, z)
    mean = kinked.mu + (2.0 - kinked.mu) * tr.mean_coeff
    assert abs(x1.mean() - mean) < 4 * tr.step_sd / math.sqrt(z.size)
    assert x1.var() == pytest.approx(tr.step_var, rel=0.02)


def test_stationary_limit(kinked):
    tr = OUTransition.from_params(kinked, 50.0)
    assert tr.step_var == pytest.approx(kinked.stationary_sd**2, rel=1e-12)


def test_derivative_stencils():
    x, h = 0.7, 1e-3
    for n in (3, 5):
        pts = np.sin(x + h * np.arange(-(n // 2), n // 2 + 1))
        d1, d2 = derivatives(pts, h)
        assert d1 == pytest.approx(math.cos(x), rel=1e-5)
        assert d2 == pytest.approx(-math.sin(x), rel=1e-4)
    with pytest.raises(ValidationError):
        derivatives(np.zeros(4), h)


def test_generator_on_linear(kinked):
    x, h = 0.4, 1e-2
    vals = 3.0 * (x + h * np.arange(-2, 3))
    assert generator_apply(vals, x, h, kinked) == pytest.approx(3.0 * kinked.theta * (kinked.mu - x))


def test_hitting_laplace_properties(kinked):
    assert hitting_laplace(kinked, 0.3, 0.3, 1.0) == 1.0
    xs = np.linspace(0.5, 6, 12)
    h = hitting_laplace(kinked, xs, 0.0, 1.0)
    assert np.all(np.diff(h) < 0) and np.all((h > 0) & (h < 1))
    xs = np.linspace(-6, 0.5, 12)
    h = hitting_laplace(kinked, xs, 1.0, 1.0)
    assert np.all(np.diff(h) > 0) and np.all((h > 0) & (h < 1))


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-5, 5), y=st.floats(-5, 5), z=st.floats(-5, 5))
def test_hitting_strong_markov(kinked, x, y, z):
    # passing through the middle level: E_x[e^{-r tau_z}] = E_x[e^{-r tau_y}] E_y[e^{-r tau_z}]
    x, y, z = sorted([x, y, z], reverse=True)
    lhs = hitting_laplace(kinked, x, z, 1.0)
    rhs = hitting_laplace(kinked, x, y, 1.0) * hitting_laplace(kinked, y, z, 1.0)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-300)
