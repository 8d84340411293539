import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nozzle_shock.errors import NoShockError, OutOfPolarError
from nozzle_shock.gas import GasModel, GasState, derived, mach_squared, state_from_mach
from nozzle_shock.shock_relations import (LOWER, UPPER, h1_residual_and_gradient, h1_smooth, h1_smooth_gradients,
                                          h3_downstream, normal_shock_downstream, normal_shock_residuals,
                                          polar_critical_points, polar_curve, polar_max_pressure,
                                          polar_state_at_pressure, rh_jump_max, rh_residuals)


def classical_normal_shock(gamma, mach):
    """Textbook ratios p2/p1, rho2/rho1, M2^2."""
    m2 = mach * mach
    p_ratio = 1.0 + 2.0 * gamma / (gamma + 1.0) * (m2 - 1.0)
    rho_ratio = (gamma + 1.0) * m2 / ((gamma - 1.0) * m2 + 2.0)
    mach2_sq = (1.0 + 0.5 * (gamma - 1.0) * m2) / (gamma * m2 - 0.5 * (gamma - 1.0))
    return p_ratio, rho_ratio, mach2_sq


def brute_force_max_deflection(gamma, mach, n=400001):
    """Max of the theta-beta-M relation over a dense wave-angle sweep."""
    beta = np.linspace(math.asin(1.0 / mach) + 1e-9, 0.5 * math.pi - 1e-9, n)
    m2 = mach * mach
    tan_t = 2.0 / np.tan(beta) * (m2 * np.sin(beta) ** 2 - 1.0) / (m2 * (gamma + np.cos(2 * beta)) + 2.0)
    return math.degrees(float(np.max(np.arctan(tan_t))))


def upstream(model, mach, p=1.0, rho=1.0, theta=0.0):
    return state_from_mach(model, p, rho, mach, theta)


def test_normal_shock_matches_textbook_at_mach_two(model):
    down = normal_shock_downstream(model, upstream(model, 2.0))
    d = derived(model, down)
    assert float(down.p) == pytest.approx(4.5, rel=1e-12)
    assert float(d.rho) == pytest.approx(8.0 / 3.0, rel=1e-12)
    assert float(mach_squared(model, down)) == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert float(down.q) == pytest.approx(0.887412, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(mach=st.floats(1.05, 6.0), gamma=st.floats(1.1, 1.67), p=st.floats(0.2, 5.0), rho=st.floats(0.2, 5.0))
def test_normal_shock_property(mach, gamma, p, rho):
    m = GasModel(gamma=gamma)
    um = state_from_mach(m, p, rho, mach)
    down = normal_shock_downstream(m, um)
    pr, rr, m2 = classical_normal_shock(gamma, mach)
    assert float(down.p) / p == pytest.approx(pr, rel=1e-10)
    assert float(derived(m, down).rho) / rho == pytest.approx(rr, rel=1e-10)
    assert float(mach_squared(m, down)) == pytest.approx(m2, rel=1e-9)
    assert max(abs(float(r)) for r in normal_shock_residuals(m, down, um)) < 1e-12
    assert float(down.s) > float(um.s)


def test_subsonic_upstream_has_no_shock(model):
    with pytest.raises(NoShockError):
        normal_shock_downstream(model, upstream(model, 0.8))


def test_max_pressure_is_normal_shock(model):
    um = upstream(model, 2.0)
    assert float(polar_max_pressure(model, um)) == pytest.approx(4.5, rel=1e-14)


@pytest.mark.parametrize("mach", [1.5, 2.0, 3.0])
def test_max_deflection_against_wave_angle_sweep(model, mach):
    crit = polar_critical_points(model, upstream(model, mach))
    assert math.degrees(crit.theta_star) == pytest.approx(brute_force_max_deflection(1.4, mach), abs=0.05)


@pytest.mark.parametrize("mach", [1.5, 2.0, 3.0])
def test_sonic_point_is_sonic(model, mach):
    um = upstream(model, mach)
    crit = polar_critical_points(model, um)
    down = polar_state_at_pressure(model, um, crit.p_sonic).downstream
    assert float(mach_squared(model, down)) ** 0.5 == pytest.approx(1.0, abs=1e-8)
    assert crit.p_sonic < crit.p_max


def test_mach_two_critical_values(model):
    crit = polar_critical_points(model, upstream(model, 2.0))
    assert crit.p_star == pytest.approx(3.64575, abs=1e-5)
    assert math.degrees(crit.theta_star) == pytest.approx(22.9735, abs=1e-3)
    assert crit.p_sonic == pytest.approx(3.43649, abs=1e-5)
    assert crit.sonic_below_star


def test_polar_curve_endpoints(model):
    um = upstream(model, 2.0)
    upper, lower = polar_curve(model, um, n=51)
    assert float(upper.p[0]) == pytest.approx(1.0)
    assert float(upper.theta[0]) == pytest.approx(0.0, abs=1e-12)
    assert float(upper.p[-1]) == pytest.approx(4.5)
    assert float(upper.theta[-1]) == pytest.approx(0.0, abs=1e-6)
    assert float(lower.p[0]) == pytest.approx(4.5)
    assert np.all(lower.theta <= 1e-12)


def test_pressure_outside_polar_rejected(model):
    with pytest.raises(OutOfPolarError):
        polar_state_at_pressure(model, upstream(model, 2.0), 4.6)


def polar_point_and_slope(model, um, p, branch):
    down = polar_state_at_pressure(model, um, p, branch).downstream
    jv = float(derived(model, down).v_comp - derived(model, um).v_comp)
    return down, jv / (float(down.p) - float(um.p))


@pytest.mark.parametrize("branch", [UPPER, LOWER])
@pytest.mark.parametrize("frac", [0.05, 0.3, 0.6, 0.9])
def test_polar_states_satisfy_lagrangian_jumps(model, branch, frac):
    um = upstream(model, 2.0)
    p = 1.0 + frac * 3.5
    down, slope = polar_point_and_slope(model, um, p, branch)
    assert rh_jump_max(model, down, um, slope) < 1e-13


def test_printed_first_jump_fails_off_axis(model):
    um = upstream(model, 2.0)
    down, slope = polar_point_and_slope(model, um, 3.0, UPPER)
    printed = rh_residuals(model, down, um, slope, printed_g1=True)[0]
    assert abs(float(printed)) > 1e-2
    planar = normal_shock_downstream(model, um)
    assert abs(float(rh_residuals(model, planar, um, 0.0, printed_g1=True)[0])) < 1e-13


@pytest.mark.parametrize("branch", [UPPER, LOWER])
def test_inverse_consistency_of_downstream_solve(model, branch):
    um = upstream(model, 2.0)
    down, slope = polar_point_and_slope(model, um, 4.0, branch)
    got = h3_downstream(model, um, slope)
    assert float(got.p) == pytest.approx(float(down.p), rel=1e-11)
    assert float(got.theta) == pytest.approx(float(down.theta), abs=1e-11)
    assert float(mach_squared(model, got)) < 1.0


def test_zero_slope_gives_normal_shock(model):
    um = upstream(model, 2.0)
    got = h3_downstream(model, um, 0.0)
    assert float(got.p) == pytest.approx(4.5, rel=1e-13)
    assert abs(float(got.theta)) < 1e-14


def test_slope_beyond_subsonic_arc_has_no_root(model):
    with pytest.raises(NoShockError):
        h3_downstream(model, upstream(model, 2.0), -0.3)


@settings(max_examples=40, deadline=None)
@given(mach=st.floats(1.3, 4.0), theta=st.floats(-0.05, 0.05), frac=st.floats(0.02, 0.98),
       lower=st.booleans())
def test_downstream_solve_recovers_subsonic_arc(mach, theta, frac, lower):
    m = GasModel()
    um = state_from_mach(m, 1.0, 1.0, mach, theta)
    crit = polar_critical_points(m, um)
    p = crit.p_sonic + frac * (crit.p_max - crit.p_sonic)
    down, slope = polar_point_and_slope(m, um, p, LOWER if lower else UPPER)
    got = h3_downstream(m, um, slope)
    assert rh_jump_max(m, got, um, slope) < 1e-10
    assert float(got.p) == pytest.approx(float(down.p), rel=1e-8)


def test_batched_downstream_solve(model):
    um = upstream(model, 2.0)
    slopes = np.linspace(-0.1, 0.1, 65)
    n = len(slopes)
    ums = GasState(*(np.full(n, float(v)) for v in (um.p, um.theta, um.q, um.s)))
    got = h3_downstream(model, ums, slopes)
    assert rh_jump_max(model, got, ums, slopes) < 1e-13


@pytest.mark.parametrize("branch", [UPPER, LOWER])
def test_smooth_level_set_vanishes_on_polar(model, branch):
    um = upstream(model, 2.0)
    for p in (1.5, 3.0, 4.2):
        down = polar_state_at_pressure(model, um, p, branch).downstream
        val = h1_smooth(model, down.theta, down.p, um.p, um.theta, um.q, um.s)
        assert abs(float(val)) < 1e-10


def test_level_set_pressure_derivative_positive_above_critical(model):
    um = upstream(model, 2.0)
    crit = polar_critical_points(model, um)
    for branch in (UPPER, LOWER):
        for p in np.linspace(crit.p_star + 0.05, 4.45, 7):
            down = polar_state_at_pressure(model, um, p, branch).downstream
            d_theta, d_p, _ = h1_smooth_gradients(model, down, um)
            assert float(d_p) > 0
            _, _, dp_branch, cert = h1_residual_and_gradient(model, down.theta, p, um, branch, crit.p_star)
            assert float(dp_branch) > 0 and cert
    planar = normal_shock_downstream(model, um)
    d_theta, d_p, _ = h1_smooth_gradients(model, planar, um)
    assert float(d_p) > 0 and abs(float(d_theta)) < 1e-12
