"""Exchange ADMM для одного временного слота MLA.

Знаки: p_i - чистая инжекция (генераторы +, LAC -), баланс sum(p) = 0, избыток
инжекции (mean > 0) снижает цену.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from algorithms.agents import BestResponseInput, best_response, surplus_value
from domain.errors import InfeasibleSlotError
from domain.models import AgentId, Scenario, SolverOptions
from domain.scenario import validate_feasibility

logger = logging.getLogger(__name__)

# (slot, iter, lambda, rho, mean_power, previous powers) -> new powers in agent order
Responder = Callable[[int, int, float, float, float, Sequence[float]], List[float]]


@dataclass(frozen=True)
class IterationState:
    iter: int
    lam: float
    rho: float
    powers: Tuple[float, ...]
    mean_power: float
    primal_residual_norm: float = math.inf
    dual_residual_norm: float = math.inf


@dataclass(frozen=True)
class TraceRow:
    iter: int
    lam: float
    rho: float
    primal_norm: float
    dual_norm: float
    eps_pri: float
    eps_dual: float
    price_gap: float = 0.0


@dataclass(frozen=True)
class SlotResult:
    slot: int
    clearing_price: float
    allocation: Dict[AgentId, float]
    iterations: int
    converged: bool
    residual_trace: Tuple[TraceRow, ...] = ()
    failure: Optional[str] = None

    @property
    def primal_residual(self) -> float:
        return self.residual_trace[-1].primal_norm if self.residual_trace else math.nan

    @property
    def dual_residual(self) -> float:
        return self.residual_trace[-1].dual_norm if self.residual_trace else math.nan

    @property
    def imbalance(self) -> float:
        return sum(self.allocation.values())


@dataclass
class HorizonResult:
    scenario: Scenario
    slots: List[SlotResult] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.slots)

    @property
    def prices(self) -> np.ndarray:
        return np.array([s.clearing_price for s in self.slots])

    def _matrix(self, ids: List[AgentId], sign: float) -> np.ndarray:
        out = np.full((len(ids), len(self.slots)), np.nan)
        for j, res in enumerate(self.slots):
            for i, aid in enumerate(ids):
                if aid in res.allocation:
                    out[i, j] = sign * res.allocation[aid]
        return out

    @property
    def consumption(self) -> np.ndarray:
        """Потребление LAC x_r(t), кВт, форма (n_lacs, T)."""
        return self._matrix([lac.id for lac in self.scenario.lacs], -1.0)

    @property
    def injection(self) -> np.ndarray:
        """Выработка c_l(t), кВт, форма (n_generators, T)."""
        return self._matrix([g.id for g in self.scenario.generators], 1.0)


def initial_price(scenario: Scenario, t: int) -> float:
    grid = scenario.grid()
    if grid is not None:
        return grid.tariff[t]
    # без сети: средний прогноз цены у LAC
    return sum(lac.forecast_price[t] for lac in scenario.lacs) / len(scenario.lacs)


def compute_residuals(
    prev: IterationState,
    next_powers: Sequence[float],
    next_mean: float,
) -> Tuple[float, float]:
    n = len(prev.powers)
    if len(next_powers) != n:
        raise ValueError(f"agent count changed: {n} -> {len(next_powers)}")
    primal = math.sqrt(n) * abs(next_mean)
    d_mean = next_mean - prev.mean_power
    moves = np.array([(p1 - p0) - d_mean for p0, p1 in zip(prev.powers, next_powers)])
    dual = prev.rho * float(np.linalg.norm(moves))
    return primal, dual


def price_gap(
    prev: IterationState,
    next_powers: Sequence[float],
    next_mean: float,
) -> float:
    """
    Наибольшее по агентам расхождение цен, €cent/kWh.

    f_i'(p_i) + λ^{k+1} = ρ(Δp_i - Δp̄) во внутренней точке (со знаком ККТ на границе),
    то есть каждый агент оптимален при цене не дальше ρ|Δp_i - Δp̄| от λ^{k+1}.
    """
    if len(next_powers) != len(prev.powers):
        raise ValueError(f"agent count changed: {len(prev.powers)} -> {len(next_powers)}")
    d_mean = next_mean - prev.mean_power
    moves = np.subtract(next_powers, prev.powers) - d_mean
    return prev.rho * float(np.max(np.abs(moves), initial=0.0))


def stopping_thresholds(
    n_agents: int,
    powers: Sequence[float],
    lam: float,
    rho: float,
    options: SolverOptions,
) -> Tuple[float, float]:
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")
    root_n = math.sqrt(n_agents)
    largest = max((abs(p) for p in powers), default=0.0)
    eps_pri = root_n * options.eps_abs + options.eps_rel * largest
    # N одинаковых множителей: ||sum lambda_i|| = N |lambda|
    eps_dual = root_n * options.eps_abs + options.eps_rel * n_agents * abs(lam)
    return eps_pri, eps_dual


def update_rho(rho: float, primal_norm: float, dual_norm: float) -> float:
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if primal_norm > 10.0 * dual_norm:
        return 2.0 * rho
    if primal_norm < dual_norm / 10.0:
        return rho / 2.0
    return rho


def local_responder(scenario: Scenario) -> Responder:
    agents = scenario.agents

    def respond(t: int, k: int, lam: float, rho: float, mean: float, prev: Sequence[float]) -> List[float]:
        return [
            best_response(spec, BestResponseInput(lam=lam, rho=rho, anchor=p - mean, slot=t))
            for spec, p in zip(agents, prev)
        ]

    return respond


def solve_slot(
    scenario: Scenario,
    t: int,
    options: Optional[SolverOptions] = None,
    respond: Optional[Responder] = None,
) -> SlotResult:
    options = options or scenario.solver
    if not validate_feasibility(scenario, t):
        raise InfeasibleSlotError(t, "demand and supply intervals do not intersect")
    respond = respond or local_responder(scenario)

    ids = scenario.agent_ids
    n = len(ids)
    state = IterationState(
        iter=0,
        lam=initial_price(scenario, t),
        rho=options.rho_initial_per_kw,
        powers=tuple(0.0 for _ in range(n)),
        mean_power=0.0,
    )
    trace: List[TraceRow] = []
    converged = False

    for k in range(options.max_iterations):
        powers = respond(t, k, state.lam, state.rho, state.mean_power, state.powers)
        mean = sum(powers) / n
        lam = state.lam - state.rho * mean

        primal, dual = compute_residuals(state, powers, mean)
        gap = price_gap(state, powers, mean)
        eps_pri, eps_dual = stopping_thresholds(n, powers, lam, state.rho, options)
        trace.append(TraceRow(k + 1, lam, state.rho, primal, dual, eps_pri, eps_dual, gap))
        logger.debug(
            "slot %d iter %d: lambda=%.6f rho=%.3g r=%.3g/%.3g s=%.3g/%.3g gap=%.3g",
            t, k + 1, lam, state.rho, primal, eps_pri, dual, eps_dual, gap,
        )

        # ||r|| = |sum p| / sqrt(N): баланс проверяется отдельно
        converged = (
            primal < eps_pri
            and dual < eps_dual
            and abs(sum(powers)) <= eps_pri
            and gap <= options.eps_price
        )
        state = IterationState(
            iter=k + 1,
            lam=lam,
            rho=state.rho if converged else update_rho(state.rho, primal, dual),
            powers=tuple(powers),
            mean_power=mean,
            primal_residual_norm=primal,
            dual_residual_norm=dual,
        )
        if converged:
            break

    if converged:
        logger.info("slot %d converged in %d iterations, price %.4f", t, state.iter, state.lam)
    else:
        logger.warning("slot %d did not converge in %d iterations", t, state.iter)

    return SlotResult(
        slot=t,
        clearing_price=state.lam,
        allocation=dict(zip(ids, state.powers)),
        iterations=state.iter,
        converged=converged,
        residual_trace=tuple(trace),
    )


def slot_welfare(scenario: Scenario, t: int, allocation: Dict[AgentId, float]) -> float:
    """Σ U_r(x_r) - Σ C_l(c_l) в слоте t (скорость, €cent/ч)."""
    return float(sum(surplus_value(spec, allocation[spec.id], t) for spec in scenario.agents))
