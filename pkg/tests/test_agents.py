import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from algorithms.agents import (
    BestResponseInput,
    best_response,
    calibrate_umax,
    feasible_box,
    implied_forecast_price,
    lac_demand_at_price,
    lac_marginal_utility,
    lac_utility,
    marginal_cost,
    marginal_value,
    production_cost,
    surplus_value,
)
from domain.errors import AgentDomainError
from tests.factories import grid, lac, pv, tpp

K = 0.217


def _objective(spec, p, inp):
    return surplus_value(spec, p, inp.slot) + inp.lam * p - 0.5 * inp.rho * (p - inp.anchor) ** 2


def test_utility_at_desired_power_is_99_percent():
    u_max = calibrate_umax(10.0, K, 100.0)
    assert lac_utility(100.0, u_max, K, 100.0) / u_max == pytest.approx(0.99, abs=1e-3)


def test_calibration_closed_form():
    assert calibrate_umax(9.87, K, 80.0) == pytest.approx(9.87 * K * 80.0 * math.exp(1 / K), rel=1e-14)
    assert implied_forecast_price(calibrate_umax(9.87, K, 80.0), K, 80.0) == pytest.approx(9.87, rel=1e-14)


def test_marginal_utility_equals_forecast_at_desired_power():
    u_max = calibrate_umax(18.21, K, 60.0)
    assert lac_marginal_utility(60.0, u_max, K, 60.0) == pytest.approx(18.21, rel=1e-12)


def test_utility_vectorized():
    u_max = calibrate_umax(10.0, K, 100.0)
    xs = np.array([0.0, 50.0, 100.0])
    out = lac_utility(xs, u_max, K, 100.0)
    assert out[0] == 0.0
    assert out[2] == pytest.approx(lac_utility(100.0, u_max, K, 100.0))


def test_demand_at_forecast_price_is_desired():
    assert lac_demand_at_price(10.0, 10.0, K, 100.0, (0.0, 200.0)) == pytest.approx(100.0, rel=1e-12)


@pytest.mark.parametrize("ratio", [0.5, 0.75, 1.0, 1.5, 2.0])
def test_demand_curve_matches_weakly_penalized_response(ratio):
    spec = lac(x_pr=100.0, forecast=10.0)
    lam = 10.0 * ratio
    expected = lac_demand_at_price(lam, 10.0, K, 100.0, (0.0, 200.0))
    p = best_response(spec, BestResponseInput(lam=lam, rho=1e-8, anchor=-expected, slot=0))
    assert -p == pytest.approx(expected, rel=1e-4)
    assert expected == pytest.approx(100.0 * (1 + K * math.log(1 / ratio)), rel=1e-12)


def test_unpenalized_optimum_at_forecast():
    spec = lac(x_pr=100.0, forecast=10.0)
    p = best_response(spec, BestResponseInput(lam=10.0, rho=1e-8, anchor=0.0, slot=0))
    assert -p == pytest.approx(100.0, rel=1e-6)


def test_demand_clips_to_box():
    assert lac_demand_at_price(0.01, 10.0, K, 100.0, (0.0, 200.0)) == 200.0
    assert lac_demand_at_price(1e6, 10.0, K, 100.0, (20.0, 200.0)) == 20.0


def test_tpp_cost_is_mw_denominated():
    spec = tpp()
    # 0.02 €cent/kWh per MW of output, on top of 11.5 €cent/kWh
    assert production_cost(spec, 1000.0, 0) == pytest.approx(11520.0)
    assert production_cost(spec, 500.0, 0, dt_hours=2.0) == pytest.approx(2 * (11.5 * 500 + 0.02 * 500 * 500 / 1000))
    assert marginal_cost(spec, 500.0, 0) == pytest.approx(11.52)


def test_tpp_best_response_weak_penalty():
    spec = tpp()
    p = best_response(spec, BestResponseInput(lam=11.52, rho=1e-12, anchor=0.0, slot=0))
    assert p == pytest.approx(500.0, rel=1e-6)
    assert best_response(spec, BestResponseInput(lam=9.87, rho=1e-12, anchor=0.0, slot=0)) == 200.0
    assert best_response(spec, BestResponseInput(lam=18.21, rho=1e-12, anchor=0.0, slot=0)) == 1000.0


def test_linear_suppliers():
    g = grid(tariff=10.0, max_draw=1000.0)
    assert best_response(g, BestResponseInput(lam=11.0, rho=1e-3, anchor=0.0, slot=0)) == 1000.0
    assert best_response(g, BestResponseInput(lam=9.0, rho=1e-3, anchor=500.0, slot=0)) == 0.0
    assert best_response(g, BestResponseInput(lam=10.0, rho=1e-3, anchor=300.0, slot=0)) == 300.0
    sun = pv(availability=400.0)
    assert best_response(sun, BestResponseInput(lam=5.0, rho=1e-3, anchor=0.0, slot=0)) == 400.0
    assert best_response(sun, BestResponseInput(lam=0.1, rho=1.0, anchor=100.0, slot=0)) == pytest.approx(100.1)


def test_boxes():
    assert feasible_box(lac(m=10.0, big_m=150.0), 0) == (-150.0, -10.0)
    assert feasible_box(tpp(), 0) == (200.0, 1000.0)
    assert feasible_box(pv(availability=0.0), 0) == (0.0, 0.0)
    assert feasible_box(grid(max_draw=50.0), 0) == (0.0, 50.0)


def test_marginal_values():
    spec = lac(x_pr=100.0, forecast=10.0)
    assert marginal_value(spec, -100.0, 0) == pytest.approx(-10.0)
    assert marginal_value(grid(tariff=7.0), 123.0, 0) == -7.0
    assert marginal_value(pv(), 123.0, 0) == 0.0


@pytest.mark.parametrize(
    "call",
    [
        lambda: BestResponseInput(lam=1.0, rho=0.0, anchor=0.0, slot=0),
        lambda: BestResponseInput(lam=1.0, rho=-1.0, anchor=0.0, slot=0),
        lambda: BestResponseInput(lam=math.nan, rho=1.0, anchor=0.0, slot=0),
        lambda: lac_utility(1.0, 1.0, K, 0.0),
        lambda: lac_demand_at_price(0.0, 10.0, K, 100.0, (0.0, 200.0)),
        lambda: production_cost(lac(), 10.0, 0),
        lambda: production_cost(tpp(), 100.0, 0),
        lambda: production_cost(tpp(), 1001.0, 0),
        lambda: calibrate_umax(-1.0, K, 100.0),
    ],
)
def test_domain_errors(call):
    with pytest.raises(AgentDomainError):
        call()


specs = st.one_of(
    st.builds(
        lambda x_pr, m_frac, extra, forecast: lac(x_pr=x_pr, m=x_pr * m_frac, big_m=x_pr + extra, forecast=forecast),
        st.floats(1.0, 500.0), st.floats(0.0, 1.0), st.floats(0.0, 500.0), st.floats(1.0, 40.0),
    ),
    st.builds(lambda a, b, lo, w: tpp(alpha=a, beta=b, lo=lo, hi=lo + w),
              st.floats(0.0, 1.0), st.floats(0.0, 30.0), st.floats(0.0, 500.0), st.floats(0.0, 1000.0)),
    st.builds(lambda a: pv(availability=a), st.floats(0.0, 1000.0)),
    st.builds(lambda k, d: grid(tariff=k, max_draw=d), st.floats(0.5, 40.0), st.floats(1.0, 2000.0)),
)
inputs = st.builds(
    lambda lam, rho, anchor: BestResponseInput(lam=lam, rho=rho, anchor=anchor, slot=0),
    st.floats(0.01, 50.0), st.floats(1e-4, 1.0), st.floats(-1500.0, 1500.0),
)


@settings(max_examples=200, deadline=None)
@given(spec=specs, inp=inputs)
def test_best_response_in_box_and_optimal(spec, inp):
    lo, hi = feasible_box(spec, 0)
    p = best_response(spec, inp)
    assert lo - 1e-9 <= p <= hi + 1e-9

    grid_points = np.linspace(lo, hi, 4001)
    best_on_grid = float(np.max(_objective(spec, grid_points, inp)))
    value = float(_objective(spec, np.array([p]), inp)[0])
    assert value >= best_on_grid - 1e-7 * max(1.0, abs(best_on_grid))


@settings(max_examples=100, deadline=None)
@given(spec=specs, inp=inputs, bump=st.floats(0.01, 10.0))
def test_best_response_monotone_in_price(spec, inp, bump):
    higher = BestResponseInput(lam=inp.lam + bump, rho=inp.rho, anchor=inp.anchor, slot=0)
    assert best_response(spec, higher) >= best_response(spec, inp) - 1e-9


@settings(max_examples=100, deadline=None)
@given(
    x_pr=st.floats(1.0, 300.0),
    lam=st.floats(0.5, 40.0),
    rho=st.floats(1e-5, 1.0),
    x_anchor=st.floats(0.0, 600.0),
)
def test_lac_stationarity_inside_box(x_pr, lam, rho, x_anchor):
    spec = lac(x_pr=x_pr, big_m=2 * x_pr, forecast=10.0)
    x = -best_response(spec, BestResponseInput(lam=lam, rho=rho, anchor=-x_anchor, slot=0))
    if 1e-6 < x < 2 * x_pr - 1e-6:
        g = lac_marginal_utility(x, spec.u_max[0], K, x_pr) - lam - rho * (x - x_anchor)
        assert abs(g) <= 1e-5 * max(1.0, lam)
