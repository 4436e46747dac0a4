from __future__ import annotations
from dataclasses import dataclass
from typing import Dict, Literal
import logging
import math

import numpy as np
import pandas as pd

from algorithms.agents import production_cost, surplus_value
from algorithms.oracle import clear_by_bisection
from domain.errors import RunDataError
from domain.models import Scenario
from domain.scenario import grid_only_variant
from simulation.run_dir import RunData

logger = logging.getLogger(__name__)

CENT_PER_EURO = 100.0

Variant = Literal["with-DER", "grid-only"]


@dataclass(frozen=True)
class BillReport:
    """Дневной счёт каждого LAC в € для одного варианта сценария."""

    variant: Variant
    bills: Dict[str, float]

    @property
    def total(self) -> float:
        return float(sum(self.bills.values()))


@dataclass(frozen=True)
class BillComparison:
    with_der: BillReport
    grid_only: BillReport
    # (slot x LAC) consumer surplus in €cent per slot, U(x) - λx over Δt
    surplus_with_der: pd.DataFrame
    surplus_grid_only: pd.DataFrame

    @property
    def savings(self) -> Dict[str, float]:
        return {aid: self.grid_only.bills[aid] - b for aid, b in self.with_der.bills.items()}

    def frame(self) -> pd.DataFrame:
        ids = list(self.with_der.bills)
        return pd.DataFrame(
            {
                "lac": ids,
                "bill_with_der_eur": [self.with_der.bills[a] for a in ids],
                "bill_grid_only_eur": [self.grid_only.bills[a] for a in ids],
                "savings_eur": [self.savings[a] for a in ids],
            }
        )


def _check_complete(prices: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(prices))
    if bad.size:
        raise RunDataError(f"run has no clearing price for slot(s) {', '.join(map(str, bad))}")


def bill_report(
    scenario: Scenario,
    prices: np.ndarray,
    allocation: pd.DataFrame,
    variant: Variant,
) -> BillReport:
    """Σ_t λ(t)·x_r(t)·Δt по каждому LAC в €. allocation: слот x агент, чистая мощность."""
    prices = np.asarray(prices, dtype=float)
    _check_complete(prices)
    dt = scenario.time_grid.slot_duration_hours
    bills = {}
    for lac in scenario.lacs:
        x = -allocation[lac.id].to_numpy(dtype=float)
        bills[lac.id] = float(np.sum(prices * x) * dt / CENT_PER_EURO)
    return BillReport(variant=variant, bills=bills)


def consumer_surplus(scenario: Scenario, prices: np.ndarray, allocation: pd.DataFrame) -> pd.DataFrame:
    dt = scenario.time_grid.slot_duration_hours
    out = {}
    for lac in scenario.lacs:
        p = allocation[lac.id].to_numpy(dtype=float)
        # p = -x, поэтому λp = -λx
        out[lac.id] = [(float(surplus_value(lac, p[t], t)) + prices[t] * p[t]) * dt for t in range(len(p))]
    return pd.DataFrame(out)


def solve_grid_only(scenario: Scenario) -> tuple[np.ndarray, pd.DataFrame]:
    """Расчёт только с сетью: при λ̃ = κ цена равна κ и x = x_pr, пока сеть не упирается в предел."""
    variant = grid_only_variant(scenario)
    prices = []
    rows = []
    for t in range(variant.time_grid.slot_count):
        cleared = clear_by_bisection(variant, t)
        prices.append(cleared.price)
        rows.append(cleared.allocation)
    return np.array(prices), pd.DataFrame(rows, columns=list(variant.agent_ids))


def compare_bills(run: RunData) -> BillComparison:
    scenario = run.scenario
    prices = run.prices.to_numpy(dtype=float)
    _check_complete(prices)
    grid_prices, grid_alloc = solve_grid_only(scenario)
    comparison = BillComparison(
        with_der=bill_report(scenario, prices, run.results, "with-DER"),
        grid_only=bill_report(scenario, grid_prices, grid_alloc, "grid-only"),
        surplus_with_der=consumer_surplus(scenario, prices, run.results),
        surplus_grid_only=consumer_surplus(scenario, grid_prices, grid_alloc),
    )
    logger.info(
        "daily bills: %.2f EUR with DER, %.2f EUR grid-only",
        comparison.with_der.total, comparison.grid_only.total,
    )
    return comparison


def consumption_error(run: RunData) -> pd.DataFrame:
    """x_r(t) - x_pr,r(t) в кВт, по столбцу на LAC."""
    out = {"slot": run.results["slot"].to_numpy()}
    for lac in run.scenario.lacs:
        x = -run.results[lac.id].to_numpy(dtype=float)
        out[lac.id] = x - np.array(lac.desired_power)
    return pd.DataFrame(out)


def generator_income(run: RunData) -> pd.DataFrame:
    """По слотам: λ·c·Δt - C(c)·Δt в €cent для каждого генератора."""
    scenario = run.scenario
    dt = scenario.time_grid.slot_duration_hours
    prices = run.prices.to_numpy(dtype=float)
    out = {"slot": run.results["slot"].to_numpy()}
    for gen in scenario.generators:
        c = run.results[gen.id].to_numpy(dtype=float)
        income = []
        for t in range(len(c)):
            if not (math.isfinite(c[t]) and math.isfinite(prices[t])):
                income.append(math.nan)
                continue
            income.append(prices[t] * c[t] * dt - production_cost(gen, c[t], t, dt))
        out[gen.id] = income
    return pd.DataFrame(out)


def profile_frame(run: RunData) -> pd.DataFrame:
    """По слотам: выработка генераторов и суммарное потребление LAC, кВт."""
    out = {"slot": run.results["slot"].to_numpy()}
    for gen in run.scenario.generators:
        out[gen.id] = run.results[gen.id].to_numpy(dtype=float)
    out["consumption"] = -sum(
        run.results[lac.id].to_numpy(dtype=float) for lac in run.scenario.lacs
    )
    return pd.DataFrame(out)
