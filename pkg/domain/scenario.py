from __future__ import annotations
from pathlib import Path
from typing import Any, Iterable, Tuple, Union
import json
import logging

from pydantic import ValidationError

from domain.errors import InfeasibleSlotError, ScenarioError
from domain.models import GridSpec, LacSpec, PvSpec, Scenario, SolverOptions, TppSpec

logger = logging.getLogger(__name__)


def _field_path(loc: Iterable[Any]) -> str:
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path or "<document>"


def _format_validation_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        # у discriminated union pydantic добавляет имя варианта в loc
        loc = [p for p in e["loc"] if p not in ("tpp", "pv", "grid")]
        lines.append(f"{_field_path(loc)}: {e['msg']}")
    return "; ".join(lines)


def load_scenario(document: Union[str, bytes, dict]) -> Scenario:
    """Разбор и проверка документа сценария (JSON-текст или уже разобранный dict)."""
    if isinstance(document, (str, bytes)):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"not a JSON document: {exc}") from exc
    else:
        data = document
    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be a JSON object")

    try:
        scenario = Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_format_validation_error(exc)) from exc

    check_feasibility(scenario)
    logger.debug(
        "loaded scenario: %d slots, %d LACs, %d generators",
        scenario.time_grid.slot_count, len(scenario.lacs), len(scenario.generators),
    )
    return scenario


def read_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return load_scenario(text)


def dump_scenario(scenario: Scenario) -> str:
    return scenario.model_dump_json(indent=2)


def write_scenario(scenario: Scenario, path: Union[str, Path]) -> None:
    Path(path).write_text(dump_scenario(scenario), encoding="utf-8")


def supply_interval(scenario: Scenario, t: int) -> Tuple[float, float]:
    lo = hi = 0.0
    for g in scenario.generators:
        if isinstance(g, TppSpec):
            lo += g.min_gen[t]
            hi += g.max_gen[t]
        elif isinstance(g, PvSpec):
            hi += g.availability[t]
        elif isinstance(g, GridSpec):
            hi += g.max_draw[t]
    return lo, hi


def demand_interval(scenario: Scenario, t: int) -> Tuple[float, float]:
    return (
        sum(lac.min_power[t] for lac in scenario.lacs),
        sum(lac.max_power[t] for lac in scenario.lacs),
    )


def validate_feasibility(scenario: Scenario, t: int) -> bool:
    """True, если [Σm, ΣM] и [Σc_min, Σc_max] пересекаются в слоте t."""
    if not 0 <= t < scenario.time_grid.slot_count:
        raise IndexError(f"slot {t} outside 0..{scenario.time_grid.slot_count - 1}")
    d_lo, d_hi = demand_interval(scenario, t)
    s_lo, s_hi = supply_interval(scenario, t)
    return s_lo <= d_hi and s_hi >= d_lo


def check_feasibility(scenario: Scenario) -> None:
    for t in range(scenario.time_grid.slot_count):
        if validate_feasibility(scenario, t):
            continue
        d_lo, d_hi = demand_interval(scenario, t)
        s_lo, s_hi = supply_interval(scenario, t)
        if s_lo > d_hi:
            detail = f"forced minimum supply {s_lo:g} kW exceeds maximum demand {d_hi:g} kW"
        else:
            detail = f"minimum demand {d_lo:g} kW exceeds maximum supply {s_hi:g} kW"
        raise InfeasibleSlotError(t, detail)


def with_solver(scenario: Scenario, **overrides: Any) -> Scenario:
    """Копия сценария с заменёнными полями SolverOptions (None игнорируется)."""
    fields = {k: v for k, v in overrides.items() if v is not None}
    if not fields:
        return scenario
    try:
        solver = SolverOptions.model_validate({**scenario.solver.model_dump(), **fields})
    except ValidationError as exc:
        raise ScenarioError(_format_validation_error(exc)) from exc
    return scenario.model_copy(update={"solver": solver})


def grid_only_variant(scenario: Scenario) -> Scenario:
    """Те же LAC, единственный генератор - сеть, λ̃ := κ(t) с перекалибровкой U_max."""
    grid = scenario.grid()
    if grid is None:
        raise ScenarioError("scenario has no grid generator to build a grid-only variant from")
    lacs = []
    for lac in scenario.lacs:
        data = lac.model_dump()
        data["forecast_price"] = list(grid.tariff)
        data["u_max"] = None
        lacs.append(LacSpec.model_validate(data))
    return Scenario(
        time_grid=scenario.time_grid,
        lacs=tuple(lacs),
        generators=(grid,),
        solver=scenario.solver,
    )
