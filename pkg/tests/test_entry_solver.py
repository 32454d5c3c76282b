import numpy as np
import pytest

from ou_entry import entry_solver as es
from ou_entry.entry_solver import CaseTag, EntryBoundary, Topology, check_row
from ou_entry.errors import ConsistencyError, MultipleRootsError, UnsupportedRegimeError

from .conftest import fd5


def lower_convex_hull(px, py):
    hull = []
    for q in zip(px, py):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (q[1] - y1) - (y2 - y1) * (q[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(q)
    return np.array(hull).T


def minorant_value(solver, xs, c):
    """V from the largest non-positive convex minorant of H, computed on a grid."""
    F = solver.pair.f_ratio(xs)
    H = np.minimum(solver.script_f(xs, c), 0.0)
    hx, hy = lower_convex_hull(F, H)
    return np.interp(F, hx, hy) * solver.pair.phi(xs)


def test_kinked_cases(kinked_solver):
    r0 = kinked_solver.solve(0.0)
    assert r0.case is CaseTag.IIIA and r0.topology is Topology.SINGLE
    r1 = kinked_solver.solve(0.25)
    assert r1.case is CaseTag.IIIB and r1.topology is Topology.TRIPLE
    assert r1.m1 > r1.m2
    assert r0.m1 < r0.m2


def test_triple_box_and_residuals(kinked, kinked_solver):
    r = kinked_solver.solve(0.25)
    ref = kinked.reference_points(0.25)
    assert r.l1 < ref.x1_0 and r.control < r.l2 <= r.l3 < ref.x2_0
    for key in ("prob_i", "prob_ii", "prob_iii"):
        assert abs(r.residuals[key]) < 1e-8


@pytest.mark.parametrize("c", [0.0, 0.25, 0.45, 0.7])
def test_v_matches_convex_minorant(kinked, kinked_solver, c):
    xs = np.linspace(kinked.mu - 8 * kinked.stationary_sd, 45.0, 12001)
    v_hull = minorant_value(kinked_solver, xs, c)
    v = kinked_solver.entry_value_V(xs, c)
    m = (xs > -2) & (xs < 8)
    assert np.max(np.abs(v - v_hull)[m]) < 1e-4


@pytest.mark.parametrize("c", [0.0, 0.2, 0.25, 0.5, 0.9])
def test_v_below_payoff_and_nonpositive(kinked_solver, refl_solver, c):
    for solver in (kinked_solver, refl_solver):
        p = solver.params
        xs = np.linspace(p.mu - 5 * p.stationary_sd, p.mu + 5 * p.stationary_sd, 301)
        v = solver.entry_value_V(xs, c)
        u = solver.gain.U(xs, c)
        assert np.all(v <= u - p.p0 + 1e-9)
        assert np.all(v <= 1e-12)


@pytest.mark.parametrize("c", [0.1, 0.25, 0.8])
def test_v_smooth_fit(kinked_solver, c):
    row = kinked_solver.solve(c)
    for ell in (row.l1, row.l2, row.l3):
        if ell is None:
            continue
        eps = 1e-6
        xs = np.array([ell - 2 * eps, ell - eps, ell, ell + eps, ell + 2 * eps])
        v = kinked_solver.entry_value_V(xs, c, row)
        left = (v[2] - v[0]) / (2 * eps)
        right = (v[4] - v[2]) / (2 * eps)
        assert left == pytest.approx(right, abs=1e-4)


@pytest.mark.parametrize("c", [0.0, 0.25])
def test_v_ode_in_continuation(kinked, kinked_solver, c):
    row = kinked_solver.solve(c)
    h = 2e-3 * kinked.stationary_sd
    if row.topology is Topology.TRIPLE:
        xs = np.concatenate([np.linspace(row.l1 + 0.05, row.l2 - 0.05, 5),
                             np.linspace(row.l3 + 0.05, 6.0, 5)])
    else:
        xs = np.linspace(row.l1 + 0.05, 6.0, 9)
    d1, d2 = fd5(lambda x: kinked_solver.entry_value_V(x, c, row), xs, h)
    v = kinked_solver.entry_value_V(xs, c, row)
    res = 0.5 * kinked.sigma**2 * d2 + kinked.theta * (kinked.mu - xs) * d1 - kinked.lam * v
    assert np.max(np.abs(res) / np.maximum(1.0, np.abs(v))) < 1e-6


def test_tie_fallback_agrees(kinked_solver, monkeypatch):
    monkeypatch.setattr(es, "TIE_RTOL", 1.0)
    tag, _ = kinked_solver.classify_repelling_case(0.25)
    assert tag is CaseTag.IIIB
    tag, _ = kinked_solver.classify_repelling_case(0.0)
    assert tag is CaseTag.IIIA


def test_case_two_above_gamma(kinked, kinked_solver):
    row = kinked_solver.solve(0.7)
    assert row.case is CaseTag.II
    assert row.control < row.l1 < kinked.reference_points(0.7).x2_0


def test_trivial_row(kinked_solver, refl_solver):
    for solver in (kinked_solver, refl_solver):
        row = solver.solve(1.0)
        assert row.topology is Topology.TRIVIAL
        v = solver.entry_value_V(np.array([-3.0, 0.0, 5.0]), 1.0, row)
        np.testing.assert_array_equal(v, -solver.params.p0)


def test_check_row_rejects_bad_box(kinked):
    bad = EntryBoundary(0.25, Topology.TRIPLE, CaseTag.IIIB, l1=0.3, l2=1.0, l3=2.0,
                        control=1.2152)
    with pytest.raises(ConsistencyError):
        check_row(kinked, bad)


# -- reflecting ---------------------------------------------------------------
def test_alpha_increasing_and_c_star(refl_solver):
    cs = np.linspace(0, 0.95, 20)
    alphas = np.array([refl_solver.solve_alpha_star(c) for c in cs])
    assert np.all(np.diff(alphas) > 0)
    c_star = refl_solver.find_c_star()
    assert 0 < c_star < 1
    assert refl_solver.solve_alpha_star(c_star) == pytest.approx(refl_solver.gain.beta(c_star), abs=1e-9)


def test_alpha_bounds(refl, refl_solver):
    for c in (0.0, 0.5, 0.9):
        a = refl_solver.solve_alpha_star(c)
        ref = refl.reference_points(c)
        assert a < min(ref.xdag0, refl.p0 / float(refl.phi_pen(c)))


@pytest.mark.parametrize("c", [0.2, 0.5])
def test_hhat_root_is_alpha_above_c_star(refl_solver, c):
    row = refl_solver.solve(c)
    assert row.case is CaseTag.REFLECTING_ALPHA
    assert abs(refl_solver.hhat_scaled(row.l1, c)) < 1e-9


@pytest.mark.parametrize("c", [0.0, 0.05])
def test_threshold_ordering_below_c_star(refl_solver, c):
    row = refl_solver.solve(c)
    assert row.case is CaseTag.REFLECTING_HHAT
    a, b = refl_solver.solve_alpha_star(c), refl_solver.gain.beta(c)
    assert a <= row.l1 <= b
    assert row.l1 < refl_solver.gain.x0_of_c(c)
    assert abs(row.residuals["smooth_fit_l1"]) < 1e-8


def test_gamma_small_ode(refl, refl_solver):
    c = 0.4
    a = refl_solver.solve_alpha_star(c)
    xs = np.linspace(a + 0.05, a + 3.0, 9)
    h = 2e-3 * refl.stationary_sd
    d1, d2 = fd5(lambda x: refl_solver.gamma_small(x, c, a), xs, h)
    g = refl_solver.gamma_small(xs, c, a)
    res = (0.5 * refl.sigma**2 * d2 + refl.theta * (refl.mu - xs) * d1 - refl.lam * g
           - refl.lam * (float(refl.phi_pen(c)) * xs - refl.p0))
    assert np.max(np.abs(res)) < 1e-6
    assert refl_solver.gamma_small(a - 1.0, c, a) == 0.0


def test_multiple_roots_refused(refl_solver, monkeypatch):
    def wiggly(x, c):
        return np.sin(3 * np.asarray(x)) if np.ndim(x) else float(np.sin(3 * x))
    monkeypatch.setattr(refl_solver, "hhat_scaled", wiggly)
    with pytest.raises(MultipleRootsError) as ei:
        refl_solver._unique_hhat_root(0.0, -10.0, 3.0)
    assert len(ei.value.roots) > 1


def test_regime_guard(kinked_solver, refl_solver):
    with pytest.raises(UnsupportedRegimeError):
        kinked_solver.solve_alpha_star(0.1)
    with pytest.raises(UnsupportedRegimeError):
        refl_solver.classify_repelling_case(0.1)


def test_grid_solve(kinked_solver):
    bs = kinked_solver.solve_grid(np.linspace(0, 1, 5))
    assert [r.topology for r in bs.rows][-1] is Topology.TRIVIAL
    assert bs.row(0.25).case is CaseTag.IIIB
