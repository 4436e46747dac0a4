from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional
import logging
import time

from algorithms.admm import HorizonResult, SlotResult, solve_slot
from domain.errors import HorizonError, InfeasibleSlotError, SolverError
from domain.models import Scenario, SolverOptions

logger = logging.getLogger(__name__)


def solve_horizon(
    scenario: Scenario,
    options: Optional[SolverOptions] = None,
    workers: int = 1,
    slots: Optional[Iterable[int]] = None,
) -> HorizonResult:
    """
    Слоты независимы (нет межслотовых ограничений), поэтому их можно решать
    в пуле потоков. Результат упорядочен по слоту и не зависит от workers.
    """
    options = options or scenario.solver
    slot_list = list(range(scenario.time_grid.slot_count)) if slots is None else list(slots)

    started = time.perf_counter()
    results: Dict[int, SlotResult] = {}
    errors: Dict[int, Exception] = {}

    def run(t: int) -> None:
        try:
            results[t] = solve_slot(scenario, t, options)
        except (InfeasibleSlotError, SolverError) as exc:
            errors[t] = exc

    if workers > 1 and len(slot_list) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, slot_list))
    else:
        for t in slot_list:
            run(t)

    if errors:
        raise HorizonError(errors)

    ordered: List[SlotResult] = [results[t] for t in sorted(results)]
    logger.info(
        "solved %d slots in %.2fs (%d converged)",
        len(ordered), time.perf_counter() - started, sum(r.converged for r in ordered),
    )
    return HorizonResult(scenario=scenario, slots=ordered)
