import math

import numpy as np
import pytest

from evsched.battery import (CcCvParams, ChargingFunction, DodAccCurve, Extension, PiecewiseLinear,
                             WearDensityFunction, build_charging_function, build_wdf, charging_function_for,
                             linear_wdf, upper_concave_envelope, wdf_from_unit_costs, wear_densities)
from evsched.errors import InvalidCurveError, InvalidFunctionError
from evsched.instgen import CASESTUDY_FAST

EXAMPLE_F = [(0, 0), (6, 2), (24.5, 7)]


def test_evaluate_published_breakpoint_and_midpoint():
    fast = PiecewiseLinear(CASESTUDY_FAST)
    assert fast(72.32) == pytest.approx(34.90)
    assert PiecewiseLinear([(0, 0), (6, 2)])(3) == pytest.approx(1.0)


def test_extension_modes():
    f = PiecewiseLinear([(1, 2), (3, 4)])
    assert f(0) == 2
    assert f(10) == 4
    g = PiecewiseLinear([(1, 2), (3, 4)], Extension.MINUS_INF, Extension.CLAMP)
    assert g(0.5) == -math.inf
    assert g(1) == 2


def test_inverse_examples():
    f = PiecewiseLinear(EXAMPLE_F)
    assert f.inverse(2) == pytest.approx(6)
    assert f.inverse(1) == pytest.approx(3)
    assert f.inverse(100) == pytest.approx(24.5)
    # least x on a flat stretch
    flat = PiecewiseLinear([(0, 0), (2, 1), (5, 1)])
    assert flat.inverse(1) == pytest.approx(2)


def test_inverse_rejects_decreasing_function():
    with pytest.raises(InvalidFunctionError):
        PiecewiseLinear([(0, 1), (1, 0)]).inverse(0.5)


def test_unsorted_breakpoints_rejected():
    with pytest.raises(InvalidFunctionError):
        PiecewiseLinear([(1, 0), (0, 1)])


def test_nearly_equal_breakpoints_merge():
    f = PiecewiseLinear([(0, 0), (1, 1), (1 + 1e-12, 2)])
    assert f.xs == (0.0, 1.0)
    assert f.ys == (0.0, 2.0)


def test_upper_concave_envelope():
    concave = PiecewiseLinear(EXAMPLE_F)
    assert upper_concave_envelope(concave).breakpoints == concave.breakpoints
    hull = upper_concave_envelope(PiecewiseLinear([(0, 0), (1, 0.2), (2, 2)]))
    assert hull.breakpoints == [(0.0, 0.0), (2.0, 2.0)]


def test_envelope_of_rising_then_falling_profile_is_concave():
    hull = upper_concave_envelope(PiecewiseLinear([(0, 0), (1, 3), (2, 2.5), (3, 4), (4, 3.9)]))
    assert hull.is_concave()
    assert hull.breakpoints[:2] == [(0.0, 0.0), (1.0, 3.0)]


@pytest.mark.parametrize('points', [EXAMPLE_F, CASESTUDY_FAST, [(0, 0), (28 / 3, 7)]])
def test_charge_semigroup(points):
    phi = ChargingFunction(PiecewiseLinear(points))
    rng = np.random.default_rng(3)
    for _ in range(200):
        beta = float(rng.uniform(0, phi.q_max))
        t1, t2 = (float(t) for t in rng.uniform(0, phi.tau_max / 2, 2))
        assert phi.charge(beta, 0.0) == pytest.approx(beta, abs=1e-9)
        assert phi.charge(beta, t1 + t2) == pytest.approx(phi.charge(phi.charge(beta, t1), t2), abs=1e-9)


def test_charge_before_inverts_charge():
    phi = ChargingFunction(PiecewiseLinear(EXAMPLE_F))
    q = phi.charge(1.0, 4.0)
    assert phi.charge_before(q, 4.0) == pytest.approx(1.0)
    assert phi.charge_before(1.0, 50.0) == 0.0


def test_charging_function_must_be_concave():
    with pytest.raises(InvalidFunctionError):
        ChargingFunction(PiecewiseLinear([(0, 0), (1, 1), (2, 5)]))
    with pytest.raises(InvalidFunctionError):
        ChargingFunction(PiecewiseLinear([(1, 0), (2, 1)]))


def test_charging_function_for_prepends_origin():
    phi = charging_function_for([(435, 45.0)], q_max=45.0)
    assert phi.pwl.breakpoints == [(0.0, 0.0), (435.0, 45.0)]
    assert phi.average_rate == pytest.approx(45 / 435)
    with pytest.raises(InvalidFunctionError):
        charging_function_for([(435, 45.0)], q_max=80.0)


def test_wdf_telescoping():
    wdf = WearDensityFunction(PiecewiseLinear([(0, 0), (2, 1), (7, 7)]))
    rng = np.random.default_rng(5)
    for _ in range(100):
        a, b, c = sorted(float(x) for x in rng.uniform(0, 7, 3))
        assert wdf.cost(a, b) + wdf.cost(b, c) == pytest.approx(wdf.cost(a, c), abs=1e-12)
        assert wdf.cost(a, b) >= 0
    assert wdf.min_density == pytest.approx(0.5)
    assert wdf.max_density == pytest.approx(1.2)


def test_wdf_must_be_convex():
    with pytest.raises(InvalidCurveError):
        WearDensityFunction(PiecewiseLinear([(0, 0), (2, 2), (4, 3)]))


def test_wdf_from_unit_costs():
    wdf = wdf_from_unit_costs(45, [0.25, 0.5, 0.75, 1.0], [1.59, 3.30, 5.20, 7.79])
    assert wdf(45) == pytest.approx(7.79)
    assert wdf.socs == (0.0, 11.25, 22.5, 33.75, 45.0)
    assert all(b >= a for a, b in zip(wdf.densities(), wdf.densities()[1:]))
    assert linear_wdf(80, 0.1)(40) == pytest.approx(4.0)


def test_single_point_dod_curve_gives_uniform_density():
    curve = DodAccCurve(((1.0, 1500),), battery_price=300.0, capacity=60.0)
    assert wear_densities(curve) == [(0.0, pytest.approx(300.0 / (2 * 1500 * 60.0)))]


def test_two_point_dod_curve_back_substitution():
    curve = DodAccCurve(((0.5, 3000), (1.0, 1000)), battery_price=120.0, capacity=10.0)
    dens = wear_densities(curve)
    assert [s for s, _ in dens] == [0.0, 0.5]
    assert dens[1][1] == pytest.approx(120.0 / 30000.0)
    assert dens[0][1] == pytest.approx(120.0 / 20000.0 - 120.0 / 30000.0)
    wdf = build_wdf(curve)
    assert wdf.cumulative.breakpoints == [(0.0, 0.0), (5.0, pytest.approx(0.01)), (10.0, pytest.approx(0.03))]


def test_dod_curve_validation():
    with pytest.raises(InvalidCurveError):
        DodAccCurve(((0.5, 1000), (1.0, 2000)), battery_price=1.0, capacity=1.0)
    with pytest.raises(InvalidCurveError):
        DodAccCurve((), battery_price=1.0, capacity=1.0)


def _cell(v_max):
    return CcCvParams(E0=3.0, K=0.01, A=0.1, B=1.0, R=0.01, Q=2.0, I_max=1.0, V_term_max=v_max, I_min=0.05,
                      capacity=45.0)


def test_pure_constant_current_charge_is_a_line():
    phi = build_charging_function(_cell(5.0), segments=1)
    assert phi.pwl.breakpoints == [(0.0, 0.0), (pytest.approx(120.0), pytest.approx(45.0))]


def test_constant_voltage_tail_fits_concave_curve():
    phi = build_charging_function(_cell(3.05), segments=4)
    assert phi.q_max == pytest.approx(45.0)
    assert 2 <= len(phi.pwl) <= 5
    assert phi.pwl.is_concave(1e-6)
    assert phi.pwl.is_nondecreasing()


def test_cccv_parameters_must_be_positive():
    with pytest.raises(InvalidFunctionError):
        CcCvParams(E0=3.0, K=0.01, A=0.1, B=1.0, R=0.0, Q=2.0, I_max=1.0, V_term_max=3.05, I_min=0.05)
