"""Независимый расчёт равновесия для проверки неподвижной точки ADMM.

clear_by_bisection ищет цену, при которой суммарное предложение равно спросу;
brute_force_welfare перебирает сбалансированные распределения маленьких задач.
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import Dict, List, Tuple
import logging
import math

import numpy as np
from scipy.optimize import bisect

from algorithms.agents import (
    feasible_box,
    implied_forecast_price,
    lac_demand_at_price,
    marginal_value,
    surplus_value,
)
from domain.errors import AgentDomainError, BracketError, EmptyGridError, InfeasibleSlotError, OracleError, TooManyAgentsError
from domain.models import AgentId, AgentSpec, GridSpec, LacSpec, PvSpec, Scenario, TppSpec
from domain.scenario import validate_feasibility

logger = logging.getLogger(__name__)

PRICE_FLOOR = 1e-6
PRICE_TOL = 1e-6
BALANCE_TOL_KW = 1e-3
BRUTE_FORCE_MAX_AGENTS = 3


@dataclass(frozen=True)
class ClearingResult:
    price: float
    allocation: Dict[AgentId, float]
    excess_supply_at_price: float


def _tpp_supply(spec: TppSpec, t: int, lam: float) -> float:
    lo, hi = spec.min_gen[t], spec.max_gen[t]
    a, b = spec.alpha_per_kw, spec.beta_per_kw
    if a > 0:
        return min(max((lam - b) / (2.0 * a), lo), hi)
    return hi if lam > b else lo


def _lac_demand(spec: LacSpec, t: int, lam: float) -> float:
    forecast = implied_forecast_price(spec.u_max[t], spec.k_sensitivity, spec.desired_power[t])
    return lac_demand_at_price(
        lam, forecast, spec.k_sensitivity, spec.desired_power[t],
        (spec.min_power[t], spec.max_power[t]),
    )


def unpenalized_response(spec: AgentSpec, t: int, lam: float) -> float:
    """Чистая мощность при цене lam; безразличные линейные поставщики стоят на нижней границе."""
    if isinstance(spec, LacSpec):
        return -_lac_demand(spec, t, lam)
    if isinstance(spec, TppSpec):
        return _tpp_supply(spec, t, lam)
    if isinstance(spec, PvSpec):
        return spec.availability[t] if lam > 0 else 0.0
    if isinstance(spec, GridSpec):
        return spec.max_draw[t] if lam > spec.tariff[t] else 0.0
    raise TypeError(f"unknown agent spec {type(spec).__name__}")


def excess_supply(scenario: Scenario, t: int, lam: float) -> float:
    if lam <= 0:
        raise AgentDomainError(f"price must be positive, got {lam}")
    return sum(unpenalized_response(spec, t, lam) for spec in scenario.agents)


def _indifference_price(spec: AgentSpec, t: int) -> float | None:
    if isinstance(spec, GridSpec):
        return spec.tariff[t]
    if isinstance(spec, TppSpec) and spec.alpha == 0:
        return spec.beta
    return None


def _bracket(scenario: Scenario, t: int) -> Tuple[float, float]:
    candidates = [1.0]
    for spec in scenario.agents:
        if isinstance(spec, GridSpec):
            candidates.append(spec.tariff[t])
        elif isinstance(spec, TppSpec):
            candidates.append(spec.beta + 2.0 * spec.alpha_per_kw * spec.max_gen[t])
        elif isinstance(spec, LacSpec):
            candidates.append(implied_forecast_price(spec.u_max[t], spec.k_sensitivity, spec.desired_power[t]))
    return PRICE_FLOOR, 2.0 * max(candidates)


def _fill(allocation: Dict[AgentId, float], specs: List[AgentSpec], t: int) -> float:
    """Отдаёт небаланс безразличным поставщикам по порядку; возвращает остаток."""
    residual = -sum(allocation.values())
    for spec in specs:
        lo, hi = feasible_box(spec, t)
        cur = allocation[spec.id]
        step = min(max(residual, lo - cur), hi - cur)
        allocation[spec.id] = cur + step
        residual -= step
    return residual


def _zero_price_clearing(scenario: Scenario, t: int) -> ClearingResult | None:
    """Случай ограничения PV: спрос упёрся в M, и его может покрыть одна бесплатная выработка."""
    allocation: Dict[AgentId, float] = {}
    for spec in scenario.agents:
        if isinstance(spec, LacSpec):
            allocation[spec.id] = -spec.max_power[t]
        elif isinstance(spec, PvSpec):
            allocation[spec.id] = 0.0
        else:
            allocation[spec.id] = unpenalized_response(spec, t, 0.0)
    pvs = [s for s in scenario.generators if isinstance(s, PvSpec)]
    residual = _fill(allocation, pvs, t)
    if residual > 0.0 or sum(allocation.values()) > BALANCE_TOL_KW:
        return None
    return ClearingResult(price=0.0, allocation=allocation, excess_supply_at_price=sum(allocation.values()))


def clear_by_bisection(scenario: Scenario, t: int, tol_kw: float = BALANCE_TOL_KW) -> ClearingResult:
    if not validate_feasibility(scenario, t):
        raise InfeasibleSlotError(t, "demand and supply intervals do not intersect")

    at_zero = _zero_price_clearing(scenario, t)
    if at_zero is not None:
        logger.debug("slot %d clears at zero price with PV curtailment", t)
        return at_zero

    lo, hi = _bracket(scenario, t)
    f_lo, f_hi = excess_supply(scenario, t, lo), excess_supply(scenario, t, hi)
    # расширяем скобку: дефицит мощности поднимает цену, избыток опускает
    for _ in range(64):
        if f_hi >= 0:
            break
        hi *= 2.0
        f_hi = excess_supply(scenario, t, hi)
    for _ in range(300):
        if f_lo <= 0 or lo < 1e-300:
            break
        lo /= 10.0
        f_lo = excess_supply(scenario, t, lo)
    if f_lo > 0 or f_hi < 0:
        raise BracketError(t, lo, hi, f_lo, f_hi)

    if f_lo == 0:
        price = lo
    elif f_hi == 0:
        price = hi
    else:
        price = bisect(lambda lam: excess_supply(scenario, t, lam), lo, hi, xtol=1e-13, maxiter=500)

    flexible = []
    for spec in scenario.generators:
        mark = _indifference_price(spec, t)
        if mark is not None and abs(price - mark) <= PRICE_TOL:
            flexible.append(spec)
    if flexible:
        price = _indifference_price(flexible[0], t)

    allocation = {spec.id: unpenalized_response(spec, t, price) for spec in scenario.agents}
    _fill(allocation, flexible, t)
    excess = sum(allocation.values())
    if abs(excess) > tol_kw:
        raise OracleError(f"slot {t}: imbalance {excess:g} kW at price {price:.9g} exceeds {tol_kw:g} kW")
    return ClearingResult(price=price, allocation=allocation, excess_supply_at_price=excess)


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    if hi - lo <= 0:
        return np.array([lo])
    n = int(math.floor((hi - lo) / step + 1e-9))
    axis = lo + step * np.arange(n + 1)
    if axis[-1] < hi - 1e-9:
        axis = np.append(axis, hi)
    return axis


def brute_force_welfare(scenario: Scenario, t: int, grid_step_kw: float) -> Dict[AgentId, float]:
    """Полный перебор сбалансированных распределений; последний агент закрывает небаланс."""
    agents = scenario.agents
    if len(agents) > BRUTE_FORCE_MAX_AGENTS:
        raise TooManyAgentsError(f"brute force handles at most {BRUTE_FORCE_MAX_AGENTS} agents, got {len(agents)}")
    if grid_step_kw <= 0:
        raise ValueError("grid_step_kw must be positive")

    *free, last = agents
    axes = [_axis(*feasible_box(spec, t), grid_step_kw) for spec in free]
    mesh = np.meshgrid(*axes, indexing="ij")
    balancing = -sum(mesh)
    lo, hi = feasible_box(last, t)
    ok = (balancing >= lo - 1e-9) & (balancing <= hi + 1e-9)
    if not ok.any():
        raise EmptyGridError(f"slot {t}: no balanced allocation on a {grid_step_kw:g} kW grid")
    balancing = np.clip(balancing, lo, hi)

    welfare = sum(surplus_value(spec, m, t) for spec, m in zip(free, mesh)) + surplus_value(last, balancing, t)
    welfare = np.where(ok, welfare, -np.inf)
    best = np.unravel_index(int(np.argmax(welfare)), welfare.shape)

    allocation = {spec.id: float(m[best]) for spec, m in zip(free, mesh)}
    allocation[last.id] = float(balancing[best])
    return allocation


def kkt_violations(scenario: Scenario, t: int, price: float, allocation: Dict[AgentId, float]) -> Dict[AgentId, float]:
    """Нарушение условия f'(p) + price = 0 по агентам (на границах коробки - с учётом знака)."""
    out: Dict[AgentId, float] = {}
    for spec in scenario.agents:
        p = allocation[spec.id]
        lo, hi = feasible_box(spec, t)
        d = float(marginal_value(spec, p, t)) + price
        tol = 1e-9 * max(1.0, abs(lo), abs(hi))
        if p <= lo + tol and p >= hi - tol:
            out[spec.id] = 0.0
        elif p <= lo + tol:
            out[spec.id] = max(d, 0.0)
        elif p >= hi - tol:
            out[spec.id] = max(-d, 0.0)
        else:
            out[spec.id] = abs(d)
    return out
