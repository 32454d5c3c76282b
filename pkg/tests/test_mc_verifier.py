import pytest

from ou_entry.errors import ValidationError
from ou_entry.mc_verifier import MCVerifier, PolicySpec


def test_policy_validation():
    with pytest.raises(ValidationError):
        PolicySpec(0.2, 1.0, 0.5, 2.0)
    with pytest.raises(ValidationError):
        PolicySpec(0.2, 1.0, 2.0, None)


def test_stop_immediately_is_exact(kinked, kinked_mc, kinked_solver):
    r = kinked_mc.simulate_entry_payoff(1.0, PolicySpec(0.3, 1e9), n_paths=1000)
    assert r.estimate == pytest.approx(kinked_solver.gain.U(1.0, 0.3) - kinked.p0, abs=1e-13)
    assert r.std_error == pytest.approx(0.0, abs=1e-14)


def test_full_inventory(kinked, kinked_mc):
    r = kinked_mc.simulate_entry_payoff(1.0, PolicySpec(1.0, 1e9), n_paths=100)
    assert r.estimate == pytest.approx(-kinked.p0)
    f = kinked_mc.simulate_full_functional(0.5, 1.0, n_paths=100, dt=1e-2, horizon=1.0)
    assert f.estimate == pytest.approx(-kinked.p0)


def test_hitting_trivial_and_branches(kinked, kinked_mc):
    assert kinked_mc.hitting_laplace_mc(0.5, 0.5, 1.0).estimate == 1.0
    from ou_entry.ou_model import hitting_laplace
    for x, y in [(1.0, 0.0), (0.0, 1.0)]:
        r = kinked_mc.hitting_laplace_mc(x, y, 1.0, n_paths=20_000)
        a = hitting_laplace(kinked, x, y, 1.0)
        assert abs(r.estimate - a) <= 3 * r.std_error + 0.02 * a


def test_reproducible(kinked):
    pol = PolicySpec(0.25, 0.32, 1.45, 2.04)
    a = MCVerifier(kinked, seed=4).simulate_entry_payoff(1.0, pol, n_paths=5000)
    b = MCVerifier(kinked, seed=4).simulate_entry_payoff(1.0, pol, n_paths=5000)
    assert a == b
    c = MCVerifier(kinked, seed=5).simulate_entry_payoff(1.0, pol, n_paths=5000)
    assert c.estimate != a.estimate


def test_entry_payoff_agrees_with_v(kinked_mc, kinked_solver):
    row = kinked_solver.solve(0.25)
    r = kinked_mc.simulate_entry_payoff(1.0, PolicySpec.from_boundary(row), n_paths=40_000)
    v = kinked_solver.entry_value_V(1.0, 0.25, row)
    assert abs(r.estimate - v) <= 3 * r.std_error
    assert r.truncation_bound < 0.1 * r.std_error


def test_antithetic_reduces_se(kinked_mc, kinked_solver):
    for c, x in [(0.0, 1.0), (0.25, 3.0), (0.5, 5.0)]:
        pol = PolicySpec.from_boundary(kinked_solver.solve(c))
        plain = kinked_mc.simulate_entry_payoff(x, pol, n_paths=20_000, dt=2e-3)
        anti = kinked_mc.simulate_entry_payoff(x, pol, n_paths=20_000, dt=2e-3, antithetic=True)
        assert anti.std_error <= plain.std_error


def test_perturbation_zero_and_large_shift(kinked, kinked_mc):
    rep = kinked_mc.perturbation_test(1.0, 0.0, 0.0, n_paths=5000)
    assert all(r["difference"] == 0.0 for r in rep)
    rep = kinked_mc.perturbation_test(1.0, 0.0, 5 * kinked.stationary_sd, n_paths=20_000)
    assert all(r["difference"] < -3 * r["pooled_se"] for r in rep)


def test_control_only_recovers_u(kinked, kinked_solver):
    # P0 = 0 with immediate entry leaves the control problem alone
    from dataclasses import replace
    from ou_entry.entry_solver import CaseTag, EntryBoundary, Topology
    p = replace(kinked, p0=0.0)
    mc = MCVerifier(p, kinked_solver, seed=9)
    row = EntryBoundary(0.25, Topology.SINGLE, CaseTag.I, l1=1e9,
                        control=kinked_solver.gain.gamma(0.25))
    r = mc.simulate_full_functional(0.5, 0.25, n_paths=40_000, dt=1e-3, row=row)
    u = kinked_solver.gain.U(0.5, 0.25)
    assert abs(r.estimate - u) <= 3 * r.std_error + 0.01 * abs(u)


def test_reflecting_full_functional_runs(refl_solver, refl):
    mc = MCVerifier(refl, refl_solver, seed=2)
    r = mc.simulate_full_functional(0.0, 0.5, n_paths=2000, dt=5e-3, horizon=10.0)
    v = refl_solver.entry_value_V(0.0, 0.5)
    # grid-time purchases bias the estimate; only gross agreement is asserted
    assert abs(r.estimate - v) < 10 * r.std_error + 0.05 * abs(v)
