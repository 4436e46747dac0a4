import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from algorithms.agents import calibrate_umax
from domain.errors import AgentDomainError, InfeasibleSlotError, ScenarioError
from domain.models import SolverOptions
from domain.profiles import OFF_PEAK_TARIFF, PEAK_TARIFF, bi_hourly_tariff, build_reference_scenario, pv_availability
from domain.scenario import (
    dump_scenario,
    grid_only_variant,
    load_scenario,
    read_scenario,
    validate_feasibility,
    with_solver,
    write_scenario,
)
from tests.factories import grid, lac, scenario, tpp


def _doc(**overrides) -> dict:
    doc = {
        "time_grid": {"slot_count": 2, "slot_duration_hours": 12.0},
        "lacs": [
            {
                "kind": "lac",
                "id": "L1",
                "desired_power": [100.0, 80.0],
                "max_power": [200.0, 200.0],
                "k_sensitivity": 0.217,
                "forecast_price": [10.0, 18.0],
            }
        ],
        "generators": [{"kind": "grid", "id": "G", "tariff": [10.0, 18.0], "max_draw": [1000.0, 1000.0]}],
    }
    doc.update(overrides)
    return doc


def test_two_agent_document_calibrates_umax():
    s = load_scenario(json.dumps(_doc()))
    spec = s.lacs[0]
    assert spec.min_power == (0.0, 0.0)
    for t, (price, x_pr) in enumerate([(10.0, 100.0), (18.0, 80.0)]):
        assert spec.u_max[t] == pytest.approx(price * 0.217 * x_pr * math.exp(1 / 0.217), rel=1e-12)
    assert s.solver == SolverOptions()


def test_tiny_sensitivity_is_a_scenario_error():
    doc = _doc()
    doc["lacs"][0]["k_sensitivity"] = 0.001
    with pytest.raises(ScenarioError, match=r"lacs\[0\].*k_sensitivity"):
        load_scenario(doc)
    with pytest.raises(AgentDomainError, match="too small"):
        calibrate_umax(10.0, 0.001, 100.0)
    # an explicit U_max needs no calibration
    doc["lacs"][0]["u_max"] = [5000.0, 6000.0]
    assert load_scenario(doc).lacs[0].k_sensitivity == 0.001


def test_explicit_umax_is_kept():
    doc = _doc()
    doc["lacs"][0]["u_max"] = [5000.0, 6000.0]
    assert load_scenario(doc).lacs[0].u_max == (5000.0, 6000.0)


def test_inverted_bounds_report_field_path():
    doc = _doc()
    doc["lacs"][0]["min_power"] = [0.0, 250.0]
    with pytest.raises(ScenarioError, match=r"lacs\[0\].*min_power\[1\]"):
        load_scenario(doc)


def test_unknown_key_rejected():
    doc = _doc()
    doc["generators"][0]["colour"] = "red"
    with pytest.raises(ScenarioError, match="colour"):
        load_scenario(doc)


def test_negative_tariff_path():
    doc = _doc()
    doc["generators"][0]["tariff"] = [10.0, -1.0]
    with pytest.raises(ScenarioError, match=r"generators\[0\]"):
        load_scenario(doc)


@pytest.mark.parametrize(
    "change",
    [
        {"time_grid": {"slot_count": 0, "slot_duration_hours": 1.0}},
        {"time_grid": {"slot_count": 2, "slot_duration_hours": 0.0}},
        {"lacs": []},
        {"generators": []},
        {"solver": {"rho_initial": 0.0}},
        {"solver": {"max_iterations": 0}},
    ],
)
def test_schema_violations(change):
    with pytest.raises(ScenarioError):
        load_scenario(_doc(**change))


def test_slot_count_mismatch():
    with pytest.raises(ScenarioError, match="slots"):
        load_scenario(_doc(time_grid={"slot_count": 3, "slot_duration_hours": 8.0}))


def test_duplicate_ids():
    doc = _doc()
    doc["generators"].append({"kind": "grid", "id": "L1", "tariff": [1.0, 1.0], "max_draw": [1.0, 1.0]})
    with pytest.raises(ScenarioError, match="duplicate"):
        load_scenario(doc)


def test_not_json():
    with pytest.raises(ScenarioError, match="JSON"):
        load_scenario("{not json")


def test_infeasible_slot_is_reported():
    doc = _doc()
    doc["lacs"][0]["min_power"] = [0.0, 50.0]
    doc["generators"][0]["max_draw"] = [1000.0, 10.0]
    with pytest.raises(InfeasibleSlotError) as info:
        load_scenario(doc)
    assert info.value.slot == 1
    assert "exceeds maximum supply" in str(info.value)


def test_forced_supply_above_max_demand():
    s = scenario([lac(big_m=150.0, x_pr=100.0)], [tpp(lo=200.0, hi=400.0)])
    assert not validate_feasibility(s, 0)
    with pytest.raises(InfeasibleSlotError, match="forced minimum supply"):
        load_scenario(dump_scenario(s))


def test_feasibility_slot_out_of_range(lac_and_grid):
    with pytest.raises(IndexError):
        validate_feasibility(lac_and_grid, 1)


@settings(max_examples=60, deadline=None)
@given(
    m=st.floats(0.0, 500.0),
    extra=st.floats(0.0, 500.0),
    draw=st.floats(1.0, 800.0),
    more=st.floats(0.0, 800.0),
)
def test_feasibility_monotone_in_capacity(m, extra, draw, more):
    base = scenario([lac(m=m, x_pr=m + 1.0, big_m=m + 1.0 + extra)], [grid(max_draw=draw)])
    wider = scenario([lac(m=m, x_pr=m + 1.0, big_m=m + 1.0 + extra)], [grid(max_draw=draw + more)])
    if validate_feasibility(base, 0):
        assert validate_feasibility(wider, 0)


def test_roundtrip(tmp_path, reference):
    assert load_scenario(dump_scenario(reference)) == reference
    path = tmp_path / "ref.json"
    write_scenario(reference, path)
    assert read_scenario(path) == reference


def test_read_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        read_scenario(tmp_path / "nope.json")


def test_agent_order(mixed_slot):
    assert mixed_slot.agent_ids == ["L1", "L2", "G", "T", "PV"]
    assert [a.id for a in mixed_slot.agents] == mixed_slot.agent_ids
    assert mixed_slot.agent("T").kind == "tpp"
    with pytest.raises(KeyError):
        mixed_slot.agent("X")


def test_with_solver_overrides(lac_and_grid):
    s = with_solver(lac_and_grid, eps_abs=1e-6, rho_initial=None)
    assert s.solver.eps_abs == 1e-6
    assert s.solver.rho_initial == lac_and_grid.solver.rho_initial
    with pytest.raises(ScenarioError):
        with_solver(lac_and_grid, eps_rel=-1.0)


def test_reference_scenario_shape():
    s = build_reference_scenario(seed=7)
    assert s.time_grid.slot_count == 24
    assert len(s.lacs) == 20
    assert [g.id for g in s.generators] == ["GRID", "TPP", "PV"]
    g = s.grid()
    assert g.tariff[0] == PEAK_TARIFF
    assert g.tariff[8] == OFF_PEAK_TARIFF
    assert g.tariff[17] == OFF_PEAK_TARIFF
    assert g.tariff[18] == PEAK_TARIFF
    for spec in s.lacs:
        assert all(0 < x <= 200.0 for x in spec.desired_power)
        assert spec.forecast_price == g.tariff


def test_reference_is_seeded():
    assert build_reference_scenario(seed=3) == build_reference_scenario(seed=3)
    assert build_reference_scenario(seed=3) != build_reference_scenario(seed=4)


def test_unknown_profile():
    with pytest.raises(ValueError, match="profile"):
        build_reference_scenario(profile="weekend")


def test_tariff_and_pv_profile():
    assert bi_hourly_tariff(7.99) == PEAK_TARIFF
    assert bi_hourly_tariff(8.0) == OFF_PEAK_TARIFF
    assert bi_hourly_tariff(18.0) == PEAK_TARIFF
    assert pv_availability(5.0) == 0.0
    assert pv_availability(21.0) == 0.0
    assert pv_availability(13.0) == pytest.approx(1000.0)


def test_grid_only_variant(reference):
    variant = grid_only_variant(reference)
    assert [g.id for g in variant.generators] == ["GRID"]
    for old, new in zip(reference.lacs, variant.lacs):
        assert new.desired_power == old.desired_power
        assert new.forecast_price == reference.grid().tariff


def test_grid_only_needs_grid():
    s = scenario([lac()], [tpp(lo=0.0)])
    with pytest.raises(ScenarioError, match="grid"):
        grid_only_variant(s)
