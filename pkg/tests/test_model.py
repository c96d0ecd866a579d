import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tweezer_transport.model import (A_EXP, HBAR, LAB_UNITS, TWO_PI_MHZ, PhysicalParams,
                                     moving_potential, omega_moving_max, omega_static,
                                     omega_tilde_sq, static_potential, static_potential_derivs,
                                     tau_moving, tau_static)

# hand-evaluated sqrt(A_st / (m sigma_st^2)) with CODATA hbar
OMEGA_ST = 2.104969e5


def test_defaults():
    p = PhysicalParams()
    assert p.mass == 6.47e-26
    assert p.a_static / (HBAR * TWO_PI_MHZ) == pytest.approx(0.53)
    assert (p.sigma_static, p.sigma_moving, p.separation, p.n_static) == (0.35e-6, 0.47e-6, 7e-6, 2)


@pytest.mark.parametrize("field,value", [("mass", 0.0), ("a_static", -1.0), ("sigma_static", np.nan),
                                         ("separation", -7e-6), ("sigma_moving", 0.0), ("n_static", 0),
                                         ("n_static", 1.5)])
def test_invalid_params(field, value):
    with pytest.raises(ValueError):
        PhysicalParams(**{field: value})


def test_static_potential_values(params):
    one = PhysicalParams(n_static=1)
    assert static_potential(0.0, one) == -one.a_static
    assert static_potential(params.separation, params) == pytest.approx(-params.a_static, rel=1e-15)
    assert abs(static_potential(params.separation / 2, params)) < 1e-20 * params.a_static


def test_static_potential_even(rng):
    one = PhysicalParams(n_static=1)
    delta = rng.uniform(0, one.sigma_static, 50)
    assert np.all(np.abs(static_potential(delta, one) - static_potential(-delta, one)) < 1e-12 * one.a_static)


def test_static_derivs_closed_form():
    one = PhysicalParams(n_static=1)
    dv, d2v = static_potential_derivs(0.0, one)
    assert dv == 0.0 and d2v == pytest.approx(one.a_static / one.sigma_static**2)
    dv, d2v = static_potential_derivs(one.sigma_static, one)
    assert dv == pytest.approx(one.a_static / one.sigma_static * np.exp(-0.5))
    assert abs(d2v) < 1e-12 * one.a_static / one.sigma_static**2


def test_static_derivs_match_finite_differences(params, rng):
    x = rng.uniform(-1e-6, 8e-6, 100)
    h = 1e-4 * params.sigma_static
    dv, d2v = static_potential_derivs(x, params)
    fd1 = (static_potential(x + h, params) - static_potential(x - h, params)) / (2 * h)
    fd2 = (static_potential(x + h, params) - 2 * static_potential(x, params)
           + static_potential(x - h, params)) / h**2
    scale1 = params.a_static / params.sigma_static
    scale2 = params.a_static / params.sigma_static**2
    assert np.max(np.abs(dv - fd1)) < 1e-6 * scale1
    assert np.max(np.abs(d2v - fd2)) < 1e-6 * scale2


def test_moving_potential(params):
    assert np.all(moving_potential(np.linspace(-1e-6, 1e-6, 5), 0.0, 0.0, params) == 0)
    assert moving_potential(2e-6, 2e-6, A_EXP, params) == -A_EXP
    assert moving_potential(2e-6 + params.sigma_moving, 2e-6, A_EXP, params) == pytest.approx(-A_EXP * np.exp(-0.5))
    with pytest.raises(ValueError):
        moving_potential(0.0, 0.0, -1.0, params)


def test_characteristic_times(params):
    assert omega_static(params) == pytest.approx(OMEGA_ST, rel=1e-6)
    assert tau_static(params) == pytest.approx(0.030e-3, rel=0.02)
    assert tau_moving(A_EXP, params) / tau_static(params) == pytest.approx(0.5, rel=0.05)
    assert omega_moving_max(0.0, params) == 0.0
    assert tau_moving(0.0, params) == np.inf


def test_frequency_scaling(params):
    w = omega_static(params)
    assert omega_static(PhysicalParams(a_static=4 * params.a_static)) == pytest.approx(2 * w)
    assert omega_static(PhysicalParams(sigma_static=2 * params.sigma_static)) == pytest.approx(w / 2)


def test_omega_tilde_sq(params):
    # (3.57 / 0.53) * (0.35 / 0.47)^2
    assert omega_tilde_sq(A_EXP, params) == pytest.approx(3.7353, rel=1e-4)
    assert omega_tilde_sq(A_EXP, params) == pytest.approx((omega_moving_max(A_EXP, params) / omega_static(params)) ** 2)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_unit_round_trip(v):
    u = LAB_UNITS
    for to, back in ((u.depth_to_si, u.depth_from_si), (u.length_to_si, u.length_from_si),
                     (u.time_to_si, u.time_from_si)):
        assert float(to(back(v))) == pytest.approx(v, rel=1e-12)
        assert float(back(to(v))) == pytest.approx(v, rel=1e-12)


def test_from_lab_matches_defaults():
    p = PhysicalParams.from_lab(6.47e-26, 0.53, 0.35, 2, 7.0, 0.47)
    q = PhysicalParams()
    for f in ("a_static", "sigma_static", "separation", "sigma_moving"):
        assert getattr(p, f) == pytest.approx(getattr(q, f), rel=1e-12)
