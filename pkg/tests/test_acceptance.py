"""Сквозные проверки на эталонном сценарии и на случайных маленьких рынках."""
import statistics

import numpy as np
import pytest

from algorithms.admm import slot_welfare, solve_slot
from algorithms.oracle import brute_force_welfare, clear_by_bisection
from domain.models import GridSpec, LacSpec, PvSpec, Scenario, TimeGrid, TppSpec
from domain.profiles import PEAK_TARIFF, TPP_MAX, TPP_MIN
from simulation.bills import compare_bills
from simulation.engine import solve_horizon
from simulation.run_dir import RunData, results_frame, trace_frame
from tests.factories import TIGHT

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def tight_run(reference_tight):
    return solve_horizon(reference_tight, workers=4)


@pytest.fixture(scope="module", params=["default", "tight"])
def solved_reference(request, reference, reference_tight):
    if request.param == "tight":
        return reference_tight, request.getfixturevalue("tight_run")
    return reference, solve_horizon(reference, workers=4)


def test_reference_converges_quickly(reference):
    result = solve_horizon(reference, workers=4)
    assert result.converged
    assert statistics.median(s.iterations for s in result.slots) <= 80


def test_merit_order(solved_reference):
    s_ref, run = solved_reference
    tariff = s_ref.grid().tariff
    for s in run.slots:
        assert s.converged, s.slot
        assert abs(s.imbalance) <= s.residual_trace[-1].eps_pri, s.slot
        if tariff[s.slot] < s_ref.agent("TPP").beta:
            assert s.allocation["TPP"] == pytest.approx(TPP_MIN, abs=1.0)
        elif s.allocation["GRID"] > 1.0:
            assert tariff[s.slot] == PEAK_TARIFF
            assert s.allocation["TPP"] == pytest.approx(TPP_MAX, abs=1.0)


def test_marginal_price_matches_oracle(solved_reference):
    s_ref, run = solved_reference
    grid_spec = s_ref.grid()
    for s in run.slots:
        ref = clear_by_bisection(s_ref, s.slot)
        assert s.clearing_price == pytest.approx(ref.price, abs=1e-3), s.slot
        if s.allocation["GRID"] < grid_spec.max_draw[s.slot] - 1e-3:
            assert s.clearing_price <= grid_spec.tariff[s.slot] + 1e-3, s.slot
        tpp = s_ref.agent("TPP")
        c = s.allocation["TPP"]
        if 1e-3 < s.allocation["GRID"] < grid_spec.max_draw[s.slot] - 1e-3:
            assert s.clearing_price == pytest.approx(grid_spec.tariff[s.slot], abs=1e-3), s.slot
        elif abs(s.allocation["GRID"]) <= 1e-6 and TPP_MIN + 1.0 < c < TPP_MAX - 1.0:
            assert s.clearing_price == pytest.approx(tpp.beta_per_kw + 2 * tpp.alpha_per_kw * c, abs=1e-3)


def test_der_never_raises_bills(tight_run, reference_tight):
    run = RunData(scenario=reference_tight, results=results_frame(tight_run), trace=trace_frame(tight_run))
    comparison = compare_bills(run)
    for lac_id, saving in comparison.savings.items():
        assert saving >= -1e-6, lac_id
    per_slot = comparison.surplus_with_der.sum(axis=1) - comparison.surplus_grid_only.sum(axis=1)
    assert (per_slot >= -1e-3 * comparison.surplus_grid_only.abs().sum(axis=1)).all()


def _random_market(seed: int) -> Scenario:
    rng = np.random.default_rng(seed)
    n_lacs = int(rng.integers(1, 8))
    tariff = float(rng.uniform(5.0, 25.0))
    lacs = []
    for r in range(n_lacs):
        x_pr = float(rng.uniform(20.0, 300.0))
        lacs.append(
            LacSpec(
                id=f"L{r}",
                desired_power=[x_pr],
                min_power=[float(rng.uniform(0.0, 0.5)) * x_pr],
                max_power=[x_pr * float(rng.uniform(1.2, 3.0))],
                k_sensitivity=float(rng.uniform(0.1, 0.5)),
                forecast_price=[float(rng.uniform(0.7, 1.3)) * tariff],
            )
        )
    top = sum(lac.max_power[0] for lac in lacs)
    generators = [GridSpec(id="G", tariff=[tariff], max_draw=[2.0 * top])]
    # PV and the TPP floor stay below total max demand, so the price stays positive
    if rng.random() < 0.6:
        lo = float(rng.uniform(0.0, 0.3)) * top
        generators.append(
            TppSpec(
                id="T",
                alpha=float(rng.uniform(0.01, 0.5)),
                beta=float(rng.uniform(3.0, 20.0)),
                min_gen=[lo],
                max_gen=[lo + float(rng.uniform(10.0, 500.0))],
            )
        )
    if rng.random() < 0.6:
        generators.append(PvSpec(id="PV", availability=[float(rng.uniform(0.0, 0.3)) * top]))
    return Scenario(
        time_grid=TimeGrid(slot_count=1, slot_duration_hours=1.0),
        lacs=tuple(lacs),
        generators=tuple(generators),
        solver=TIGHT,
    )


@pytest.mark.parametrize("seed", range(50))
def test_random_markets_match_oracle(seed):
    s = _random_market(seed)
    assert 2 <= len(s.agents) <= 10
    result = solve_slot(s, 0)
    ref = clear_by_bisection(s, 0)
    assert result.converged
    assert result.clearing_price == pytest.approx(ref.price, abs=1e-3)
    for aid, p in ref.allocation.items():
        assert result.allocation[aid] == pytest.approx(p, abs=max(1e-3, 1e-4 * abs(p)))
    if len(s.agents) <= 3:
        brute = brute_force_welfare(s, 0, grid_step_kw=1.0)
        # one 1 kW step times the steepest marginal value in play
        lipschitz = 2.0 * max(s.grid().tariff[0], ref.price, 1.0)
        assert slot_welfare(s, 0, result.allocation) >= slot_welfare(s, 0, brute) - lipschitz
