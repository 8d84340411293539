import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mms import mms_error, observed_orders
from nozzle_shock.errors import DomainError, EllipticityError, RegimeError
from nozzle_shock.gas import GasState
from nozzle_shock.subsonic import (FieldSet, FixedDomainGrid, check_hypotheses, conservation_audit,
                                   recover_q_s, shock_oblique_coeffs, theta_coefficients)


def _q_for_mach2(model, p, s, m2):
    rho = model.density(p, s)
    return np.sqrt(m2 * model.gamma * p / rho)


def test_manufactured_solution_second_order():
    errs, orders = observed_orders((32, 64, 128))
    assert errs[-1] < 1e-4
    assert all(o > 1.9 for o in orders)


def test_manufactured_error_small_on_coarse_grid():
    assert mms_error(16) < 5e-3


def test_grid_too_small():
    with pytest.raises(DomainError):
        FixedDomainGrid(4, 16, 0.5, 1.0, 1.0)


def test_coefficients_positive_definite_downstream(model, background):
    a11, a12, a22, lam = theta_coefficients(model, background.u_plus_bar)
    assert lam > 0 and a11 > 0 and a22 > 0
    assert a11 * a22 - a12 ** 2 > 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-0.4, 0.4), st.floats(1.0, 6.0))
def test_coefficients_elliptic_for_subsonic_states(m2, theta, p):
    from nozzle_shock.gas import GasModel
    model = GasModel()
    q = _q_for_mach2(model, p, 0.3, m2)
    a11, a12, a22, lam = theta_coefficients(model, GasState(p, theta, q, 0.3))
    assert lam > 0
    assert a11 * a22 - a12 ** 2 > 0


def test_supersonic_node_reports_location(model, background):
    b = background.u_plus_bar
    p = np.full((5, 4), float(b.p))
    s = np.full_like(p, float(b.s))
    q = np.full_like(p, float(b.q))
    q[3, 2] = _q_for_mach2(model, float(b.p), float(b.s), 1.05)
    with pytest.raises(EllipticityError) as err:
        theta_coefficients(model, GasState(p, np.zeros_like(p), q, s))
    assert err.value.location["node"] == (3, 2)
    assert "M^2=1.05" in str(err.value)


def _uniform_fields(background, shape=(9, 9)):
    b = background.u_plus_bar
    return FieldSet(*(np.full(shape, float(v)) for v in (b.p, b.theta, b.q, b.s)))


def test_hypotheses_pass_on_background(model, background):
    f = _uniform_fields(background)
    rep = check_hypotheses(model, f, background.u_plus_bar, background, 0.1)
    assert rep.passed
    rep.raise_if_failed()


def test_hypothesis_mach_injection_located(model, background):
    f = _uniform_fields(background)
    b = background.u_plus_bar
    f.q[4, 6] = _q_for_mach2(model, float(b.p), float(b.s), 1.05)
    grid = FixedDomainGrid(8, 8, 0.5, 1.0, 2.0)
    trace = GasState(np.full(9, float(b.p)), np.zeros(9), np.full(9, float(b.q)), np.full(9, float(b.s)))
    rep = check_hypotheses(model, f, trace, background, 0.1)
    assert not rep.mach_ok and rep.mach_location == (4, 6)
    with pytest.raises(RegimeError) as err:
        rep.raise_if_failed(grid)
    assert err.value.location["mach_node"] == (4, 6)
    assert err.value.location["mach_xi_eta"] == (float(grid.xi[4]), float(grid.eta[6]))


def test_hypothesis_trace_pressure_injection_located(model, background):
    b = background.u_plus_bar
    p_tr = np.full(9, float(b.p))
    p_tr[5] = background.p_star + 0.05
    trace = GasState(p_tr, np.zeros(9), np.full(9, float(b.q)), np.full(9, float(b.s)))
    rep = check_hypotheses(model, _uniform_fields(background), trace, background, 0.1)
    assert not rep.pressure_ok and rep.pressure_location == 5
    with pytest.raises(RegimeError) as err:
        rep.raise_if_failed()
    assert err.value.location["pressure_trace_node"] == 5


def test_oblique_coefficients_gate_on_trace_pressure(model, background):
    b = background.u_plus_bar
    um = background.u_minus_bar
    n = 6
    up = GasState(np.full(n, float(b.p)), np.zeros(n), np.full(n, float(b.q)), np.full(n, float(b.s)))
    A, B, f, _ = shock_oblique_coeffs(model, up, um, np.zeros(n), p_star=background.p_star, eps_p=0.1)
    assert np.all(A > 0)
    np.testing.assert_allclose(B, 0.0, atol=1e-12)
    low = GasState(np.where(np.arange(n) == 2, background.p_star + 0.01, float(b.p)), up.theta, up.q, up.s)
    with pytest.raises(RegimeError) as err:
        shock_oblique_coeffs(model, low, um, np.zeros(n), p_star=background.p_star, eps_p=0.1)
    assert err.value.location["trace_node"] == (2,)


def test_recover_q_s_conserves_entropy_and_bernoulli(model, background):
    b = background.u_plus_bar
    rng = np.random.default_rng(0)
    grid = FixedDomainGrid(16, 8, 0.5, 1.0, 2.0)
    n = grid.ny + 1
    trace = GasState(float(b.p) + 0.01 * rng.standard_normal(n), np.zeros(n),
                     float(b.q) + 0.01 * rng.standard_normal(n), float(b.s) + 0.01 * rng.standard_normal(n))
    p = float(b.p) + 0.02 * rng.standard_normal(grid.shape)
    p[0] = trace.p
    q, s = recover_q_s(model, p, trace)
    np.testing.assert_allclose(q[0], trace.q, rtol=1e-13)
    audit = conservation_audit(model, grid, FieldSet(p, np.zeros_like(p), q, s))
    assert audit["entropy_dxi"] == 0.0
    assert audit["bernoulli_dxi"] < 1e-11


def test_recover_q_s_fails_with_location(model, background):
    b = background.u_plus_bar
    n = 5
    trace = GasState(np.full(n, float(b.p)), np.zeros(n), np.full(n, float(b.q)), np.full(n, float(b.s)))
    p = np.full((4, n), float(b.p))
    p[2, 1] = 100.0
    with pytest.raises(RegimeError) as err:
        recover_q_s(model, p, trace)
    assert err.value.location["node"] == (2, 1)
