import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nozzle_shock.errors import DomainError
from nozzle_shock.gas import (MARGINAL, SUBSONIC, SUPERSONIC, GasModel, GasState, derived, flow_regime,
                              mach_squared, state_from_mach)

positive = st.floats(0.05, 20.0)


def test_reference_state_speed(model):
    u = state_from_mach(model, 1.0, 1.0, 2.0)
    assert float(u.q) == pytest.approx(2.0 * math.sqrt(1.4), rel=1e-14)
    assert float(mach_squared(model, u)) == pytest.approx(4.0, rel=1e-14)


def test_density_entropy_round_trip(model):
    s = model.entropy(2.0, 1.7)
    assert model.density(2.0, s) == pytest.approx(1.7, rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(p=positive, rho=positive, gamma=st.floats(1.05, 1.8))
def test_isentropic_law_holds(p, rho, gamma):
    m = GasModel(gamma=gamma)
    s = m.entropy(p, rho)
    assert p == pytest.approx(m.entropy_factor(s) * rho ** gamma, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(p=positive, rho=positive, mach=st.floats(0.1, 5.0), theta=st.floats(-0.5, 0.5))
def test_bernoulli_inversion(p, rho, mach, theta):
    m = GasModel()
    u = state_from_mach(m, p, rho, mach, theta)
    d = derived(m, u)
    q = m.speed_from_bernoulli(d.bernoulli_B, u.p, u.s)
    assert q == pytest.approx(float(u.q), rel=1e-10)
    assert float(d.u_comp) == pytest.approx(float(u.q) * math.cos(theta), rel=1e-12)


def test_regime_classification(model):
    sup = state_from_mach(model, 1.0, 1.0, 1.5)
    sub = state_from_mach(model, 1.0, 1.0, 0.5)
    assert flow_regime(model, sup) == SUPERSONIC
    assert flow_regime(model, sub) == SUBSONIC
    near = state_from_mach(model, 1.0, 1.0, 1.01)
    assert flow_regime(model, near, eps=0.05) == MARGINAL


def test_nonpositive_state_rejected(model):
    with pytest.raises(DomainError):
        derived(model, GasState(-1.0, 0.0, 1.0, 0.0))


def test_state_array_round_trip():
    u = GasState(np.array([1.0, 2.0]), np.array([0.1, 0.2]), np.array([3.0, 4.0]), np.array([0.0, 0.5]))
    v = GasState.from_array(u.as_array())
    assert np.array_equal(v.q, u.q)
    assert float(u.at(1).p) == 2.0


@pytest.mark.parametrize("gamma", [1.0, 0.9])
def test_gamma_must_exceed_one(gamma):
    with pytest.raises((DomainError, ValueError)):
        GasModel(gamma=gamma)
