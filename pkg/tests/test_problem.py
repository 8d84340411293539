import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nozzle_shock.errors import ConfigError, InputError
from nozzle_shock.gas import GasModel
from nozzle_shock.problem import (InflowPerturbation, InletProfile, NozzleSpec, Profile, admissible_pe_interval,
                                  background_from_parameters, build_setup, builtin_profile, load_profile_csv,
                                  mass_flux_width, one_sided_derivatives, profile_integrals, resolve_profile,
                                  validate_compatibility, y0_map)

Q_MINUS = 2.0 * math.sqrt(1.4)


def test_kappa_oracle(background):
    # momentum balance forces rho+ q+^2 = (1 + 5.6) - 4.5 = 2.1
    oracle = ((0.4 / (1.4 * 4.5)) + 1.0 / 2.1) * 3.5
    assert background.kappa == pytest.approx(oracle, abs=1e-12)
    assert background.kappa == pytest.approx(17.0 / 9.0, abs=1e-9)
    assert background.p_jump == pytest.approx(3.5, abs=1e-12)


def test_kappa_constants_values(background):
    assert background.kappa1 == pytest.approx(-0.529101, abs=1e-6)
    assert background.kappa2 == pytest.approx(1.058201, abs=1e-6)
    assert math.isfinite(background.kappa2)


def test_kappa_positive_random_backgrounds():
    rng = np.random.default_rng(20240611)
    for mach in rng.uniform(1.2, 4.0, size=20):
        bg = background_from_parameters(GasModel(), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), mach)
        assert bg.kappa > 0


def test_background_is_deterministic(model):
    a = background_from_parameters(model, 1.0, 1.0, 2.0)
    b = background_from_parameters(model, 1.0, 1.0, 2.0)
    assert a == b


def test_uniform_mass_flux_width(model, background):
    inlet = InletProfile(model, background.u_minus_bar, InflowPerturbation.zero(), 0.0)
    assert mass_flux_width(model, inlet) == pytest.approx(Q_MINUS, rel=1e-14)
    assert Q_MINUS == pytest.approx(2.366432, abs=1e-6)


def test_mass_flux_width_scales_with_density(model):
    a = background_from_parameters(model, 1.0, 1.0, 2.0)
    inlet_a = InletProfile(model, a.u_minus_bar, InflowPerturbation.zero(), 0.0)
    # doubling rho at fixed p and q (entropy shifts) doubles the flux
    base = a.u_minus_bar
    doubled = base.replace(s=model.entropy(base.p, 2.0 * model.density(base.p, base.s)))
    inlet_b = InletProfile(model, doubled, InflowPerturbation.zero(), 0.0)
    assert mass_flux_width(model, inlet_b) == pytest.approx(2.0 * mass_flux_width(model, inlet_a), rel=1e-13)


def test_mass_flux_width_perturbation_bound(setup_default):
    c = abs(setup_default.eta0 - Q_MINUS) / setup_default.sigma
    assert c < 5.0


def test_mass_flux_quadrature_converges(model, background):
    inflow = InflowPerturbation(builtin_profile("bump"), builtin_profile("ramp"), builtin_profile("bump", 0.5),
                                builtin_profile("affine"))
    inlet = InletProfile(model, background.u_minus_bar, inflow, 0.03)
    a, b = mass_flux_width(model, inlet, n=513), mass_flux_width(model, inlet, n=1025)
    assert abs(a - b) / b <= 1e-8


def test_y0_uniform_is_linear(model, background):
    inlet = InletProfile(model, background.u_minus_bar, InflowPerturbation.zero(), 0.0)
    y0 = y0_map(model, inlet)
    eta = np.linspace(0, y0.eta0, 11)
    assert np.allclose(y0(eta), eta / y0.eta0, atol=1e-14)


def test_y0_endpoint_monotone_and_consistent(setup_default):
    y0 = setup_default.y0
    eta = np.linspace(0, y0.eta0, 1000)
    x = y0(eta)
    assert abs(y0(y0.eta0) - 1.0) < 1e-8
    assert np.all(np.diff(x) > 0)
    slope = y0._spline.derivative()(eta[1:-1])
    w = setup_default.inlet.mass_flux_density(x[1:-1])
    assert np.max(np.abs(slope * w - 1.0)) < 1e-6


def test_interval_uniform_inflow(model, background):
    setup = build_setup(model, background, NozzleSpec(1.0, 0.01, 0.5), InflowPerturbation.zero())
    iv = setup.interval
    assert iv.scaled_lo == pytest.approx(1.0 - 17.0 / 9.0, abs=1e-9)
    assert iv.scaled_hi == pytest.approx(1.0, abs=1e-12)
    assert iv.scaled_hi - iv.scaled_lo == pytest.approx(background.kappa, abs=1e-12)
    rho_p, q_p = 8.0 / 3.0, Q_MINUS * 3.0 / 8.0
    prefactor = (1.0 - 1.0 / 3.0) * Q_MINUS / (rho_p ** 2 * q_p ** 3)
    assert iv.prefactor == pytest.approx(prefactor, rel=1e-10)
    assert iv.lo == pytest.approx((1.0 - 17.0 / 9.0) / prefactor, rel=1e-9)
    assert iv.g_script_printed == 0.0
    assert iv.lo < iv.hi


def test_interval_shift_is_linear(background):
    base = {"p0": 0.0, "theta0": 0.0, "q0": 0.0, "s0": 0.0}
    shifted = dict(base, s0=0.3)
    a = admissible_pe_interval(background, base, 1.0, Q_MINUS)
    b = admissible_pe_interval(background, shifted, 1.0, Q_MINUS)
    d_inflow = b.inflow_integral - a.inflow_integral
    assert b.lo - a.lo == pytest.approx(-d_inflow / a.prefactor, rel=1e-12)
    assert b.hi - a.hi == pytest.approx(-d_inflow / a.prefactor, rel=1e-12)


def test_compatibility_identity_profile_flags_top_corner(model, background):
    inflow = InflowPerturbation(builtin_profile("zero"), builtin_profile("affine"), builtin_profile("zero"),
                                builtin_profile("zero"))
    inlet = InletProfile(model, background.u_minus_bar, inflow, 0.01)
    rep = validate_compatibility(model, inlet)
    status = {c.name: c.passed for c in rep.checks}
    assert status["theta0(0)=0"] and status["theta0(1)=1"]
    assert not status["theta0'(1) relation (printed scale)"]
    assert not rep.passed


def test_compatibility_zero_profile_derivatives_pass(model, background):
    inlet = InletProfile(model, background.u_minus_bar, InflowPerturbation.zero(), 0.0)
    rep = validate_compatibility(model, inlet)
    assert rep.derivative_conditions_passed
    assert rep.failed() == ["theta0(1)=1"]


def test_default_ramp_profile_is_compatible(setup_default):
    rep = validate_compatibility(setup_default.model, setup_default.inlet)
    assert rep.passed, rep.failed()


def test_endpoint_derivatives_second_order():
    f = lambda x: np.sin(1.7 * x) + x ** 3
    d1 = lambda x: 1.7 * np.cos(1.7 * x) + 3 * x ** 2
    errs = []
    for n in (33, 65, 129):
        xs = np.linspace(0, 1, n)
        got = one_sided_derivatives(xs, f(xs))
        errs.append(max(abs(got[0] - d1(0.0)), abs(got[2] - d1(1.0))))
    orders = [math.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert all(abs(o - 2.0) < 0.2 for o in orders)


def test_profile_csv_round_trip(tmp_path):
    path = tmp_path / "p.csv"
    xs = np.linspace(0, 1, 41)
    path.write_text("x2,value\n" + "".join(f"{x},{math.sin(x)}\n" for x in xs))
    prof = load_profile_csv(str(path))
    assert float(prof(0.37)) == pytest.approx(math.sin(0.37), abs=1e-6)


def test_profile_csv_single_column_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0.0,1.0\n0.5\n1.0,2.0\n")
    with pytest.raises(InputError, match=r"bad.csv:2"):
        load_profile_csv(str(path))


def test_profile_csv_too_few_samples(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("0,0\n0.5,1\n1,0\n")
    with pytest.raises(InputError):
        load_profile_csv(str(path))


def test_resolve_profile_scaled_builtin():
    prof = resolve_profile("bump:2")
    assert float(prof(0.5)) == pytest.approx(2.0)
    assert float(prof.derivative(0.5)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InputError):
        resolve_profile("bump:x")


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(-3, 3), x=st.floats(0, 1))
def test_scaled_profiles_are_linear(scale, x):
    base = builtin_profile("ramp")
    assert float(base.scaled(scale)(x)) == pytest.approx(scale * float(base(x)), abs=1e-12)


@pytest.mark.parametrize("kw", [dict(xi0=1.2), dict(L=-1.0), dict(sigma=0.2), dict(sigma=-0.01)])
def test_nozzle_spec_rejects_bad_input(kw):
    with pytest.raises(ConfigError):
        NozzleSpec(**kw)


def test_sigma_cap_override():
    assert NozzleSpec(sigma=0.2, force=True).sigma == 0.2
