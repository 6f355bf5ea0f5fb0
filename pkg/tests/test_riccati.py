import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renvol import riccati as rc


@pytest.fixture(scope="module")
def sol():
    return rc.solve_y0()


def test_series_solves_ode_to_order():
    # the truncated series leaves an O(r^6) residual in the ODE
    for r in (1e-3, 1e-2, 5e-2):
        res = rc.series_derivative(r) - rc.rhs(r, rc.series(r))
        assert abs(res) < 5 * r ** 6 + 1e-15


def test_agreement_with_dop853(sol):
    r = np.linspace(0, 30, 1501)
    assert np.abs(sol(r) - rc.reference_y0(r)).max() < 1e-9


def test_invariants(sol):
    inv = sol.invariants()
    assert inv["passed"]
    assert 1 - sol(30.0) <= 0.05


def test_derivative_at_zero_from_table(sol):
    r = np.linspace(0.02, 0.3, 29)
    X = np.stack([r, r ** 3, r ** 5, r ** 7], 1)
    a = np.linalg.lstsq(X, sol(r), rcond=None)[0][0]
    assert a == pytest.approx(0.5, abs=1e-8)


def test_phi_derivative_at_zero(sol):
    d = np.linspace(0.01, 0.15, 29)
    X = np.stack([d, d ** 3, d ** 5, d ** 7], 1)
    a = np.linalg.lstsq(X, [sol.phi(x) for x in d], rcond=None)[0][0]
    assert a == pytest.approx(2.0, abs=1e-6)
    assert sol.phi(0.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 29.9))
def test_phi_inverts_y0(r):
    s = rc.solve_y0()
    assert s.phi(s(r)) == pytest.approx(r, abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 0.99), st.floats(0.0, 0.99))
def test_phi_increasing(a, b):
    s = rc.solve_y0()
    lo, hi = sorted((a, b))
    if hi > lo:
        assert s.phi(hi) > s.phi(lo)


def test_derivative_matches_ode(sol):
    r = np.linspace(0.5, 25, 50)
    np.testing.assert_allclose(sol.derivative(r), rc.rhs(r, sol(r)), atol=1e-10)


def test_phi_domain(sol):
    for bad in (-0.1, 1.0, 1.5, float("nan")):
        with pytest.raises(rc.DomainError):
            sol.phi(bad)
    with pytest.raises(rc.DomainError):
        sol.phi(0.9995)  # beyond the table on [0, 30]


def test_phi_blows_up_near_one():
    s = rc.solve_y0(60.0)
    assert s.phi(0.999) > 3 * s.phi(0.9)


def test_disk_radius_bound():
    arg = rc.disk_argument(0.5, 2)
    assert arg == pytest.approx(0.25 * 3 * math.sqrt(math.pi) / 2, rel=1e-15)
    val = rc.disk_radius_bound(0.5, 2)
    assert val == pytest.approx(rc.phi(arg) / 0.5, rel=1e-15)


def test_disk_precondition_rejected():
    with pytest.raises(rc.DomainError, match="precondition"):
        rc.disk_radius_bound(1.0, 2)
    with pytest.raises(rc.DomainError):
        rc.disk_radius_bound(0.5, 1)


def test_cor_disk_radius_scaling():
    # phi(k^2 delta / Delta0) / k with k = 1 reduces to phi(delta / Delta0)
    assert rc.cor_disk_radius(1.0, 0.4, 2.0) == pytest.approx(rc.phi(0.2))


def test_model_profile_small_radius():
    for k in (0.0, 0.5, 1.0, 2.0):
        A, L, y, dy = rc.model_profile(k, np.array([1e-6]))
        assert y[0] == pytest.approx(0.5e-6, rel=1e-9)
        assert dy[0] == pytest.approx(0.5, rel=1e-9)


@pytest.mark.parametrize("k", [0.0, 0.5, 1.0])
def test_ball_profile_check(k):
    rep = rc.ball_profile_check(k, 3.0)
    assert rep["passed"]
    assert rep["identity_defect"] < 1e-10
    assert rep["mesh_max_rel_error"] < 0.02


def test_comparison_fails_for_large_curvature_is_not_asserted():
    rep = rc.ball_profile_check(2.0, 2.0, mesh_check=False)
    assert rep["comparison_ok"] and rep["identity_ok"]
