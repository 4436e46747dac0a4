"""Экономика агентов: кривые полезности и затрат, калибровка U_max, штрафной лучший ответ.

Мощности в кВт, цены в €cent/kWh, ρ в €cent/kWh на кВт. Полезность и затраты - скорости
(€cent/ч); умножить на длительность слота, чтобы получить €cent за слот.
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import Tuple, Union
import math
import sys

import numpy as np

from domain.errors import AgentDomainError, SolverError, UmaxOverflowError
from domain.models import AgentSpec, GridSpec, LacSpec, NetPower, PvSpec, TppSpec

ArrayLike = Union[float, np.ndarray]

LAC_MAX_STEPS = 200
LAC_STEP_TOL = 1e-10
BOX_TOL = 1e-9


@dataclass(frozen=True)
class BestResponseInput:
    lam: float
    rho: float
    anchor: NetPower
    slot: int

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise AgentDomainError(f"rho must be positive, got {self.rho}")
        if not (math.isfinite(self.lam) and math.isfinite(self.rho) and math.isfinite(self.anchor)):
            raise AgentDomainError("best-response input must be finite")


def _clip(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


# --- LAC utility ---


def lac_utility(x: ArrayLike, u_max: float, k_sensitivity: float, x_pr: float) -> ArrayLike:
    if x_pr == 0:
        raise AgentDomainError("desired power x_pr must be nonzero")
    scale = k_sensitivity * x_pr
    if isinstance(x, np.ndarray):
        return u_max * -np.expm1(-x / scale)
    return u_max * -math.expm1(-x / scale)


def lac_marginal_utility(x: ArrayLike, u_max: float, k_sensitivity: float, x_pr: float) -> ArrayLike:
    scale = k_sensitivity * x_pr
    if isinstance(x, np.ndarray):
        return (u_max / scale) * np.exp(-x / scale)
    return (u_max / scale) * math.exp(-x / scale)


def calibrate_umax(forecast_price: float, k_sensitivity: float, x_pr: float) -> float:
    """U_max, при котором x_pr - оптимум без штрафа при прогнозной цене."""
    if forecast_price <= 0 or k_sensitivity <= 0 or x_pr <= 0:
        raise AgentDomainError("forecast price, K and x_pr must be positive")
    scale = forecast_price * k_sensitivity * x_pr
    # exp(1/K) переполняет float при малых K
    if 1.0 / k_sensitivity > math.log(sys.float_info.max) - math.log(scale):
        raise UmaxOverflowError(f"k_sensitivity={k_sensitivity:g} is too small: U_max exceeds the float range")
    return scale * math.exp(1.0 / k_sensitivity)


def implied_forecast_price(u_max: float, k_sensitivity: float, x_pr: float) -> float:
    """Обратная к calibrate_umax: цена, при которой x_pr - оптимум без штрафа."""
    return u_max * math.exp(-1.0 / k_sensitivity) / (k_sensitivity * x_pr)


def lac_demand_at_price(
    lam: float,
    forecast_price: float,
    k_sensitivity: float,
    x_pr: float,
    box: Tuple[float, float],
) -> float:
    if lam <= 0:
        raise AgentDomainError(f"price must be positive, got {lam}")
    m, big_m = box
    return _clip(x_pr * (1.0 + k_sensitivity * math.log(forecast_price / lam)), m, big_m)


# --- generation costs ---


def production_cost(spec: AgentSpec, c: float, t: int, dt_hours: float = 1.0) -> float:
    """Стоимость выработки c кВт за слот длиной dt_hours, €cent."""
    if isinstance(spec, LacSpec):
        raise AgentDomainError(f"{spec.id} is not a generator")
    lo, hi = feasible_box(spec, t)
    if not lo - BOX_TOL <= c <= hi + BOX_TOL:
        raise AgentDomainError(f"{spec.id}: c={c} kW outside [{lo}, {hi}] in slot {t}")
    return -float(surplus_value(spec, c, t)) * dt_hours


# --- generic f_i(p), f_i'(p) and boxes in net-power terms ---


def feasible_box(spec: AgentSpec, t: int) -> Tuple[float, float]:
    if isinstance(spec, LacSpec):
        return -spec.max_power[t], -spec.min_power[t]
    if isinstance(spec, TppSpec):
        return spec.min_gen[t], spec.max_gen[t]
    if isinstance(spec, PvSpec):
        return 0.0, spec.availability[t]
    if isinstance(spec, GridSpec):
        return 0.0, spec.max_draw[t]
    raise TypeError(f"unknown agent spec {type(spec).__name__}")


def surplus_value(spec: AgentSpec, p: ArrayLike, t: int) -> ArrayLike:
    """f_i(p): U_r(-p) для LAC, -C_l(p) для генератора (€cent/ч)."""
    if isinstance(spec, LacSpec):
        return lac_utility(-p, spec.u_max[t], spec.k_sensitivity, spec.desired_power[t])
    if isinstance(spec, TppSpec):
        return -(spec.alpha_per_kw * p * p + spec.beta_per_kw * p + spec.gamma)
    if isinstance(spec, PvSpec):
        return p * 0.0
    if isinstance(spec, GridSpec):
        return -spec.tariff[t] * p
    raise TypeError(f"unknown agent spec {type(spec).__name__}")


def marginal_value(spec: AgentSpec, p: ArrayLike, t: int) -> ArrayLike:
    if isinstance(spec, LacSpec):
        return -lac_marginal_utility(-p, spec.u_max[t], spec.k_sensitivity, spec.desired_power[t])
    if isinstance(spec, TppSpec):
        return -(2.0 * spec.alpha_per_kw * p + spec.beta_per_kw)
    if isinstance(spec, PvSpec):
        return p * 0.0
    if isinstance(spec, GridSpec):
        return p * 0.0 - spec.tariff[t]
    raise TypeError(f"unknown agent spec {type(spec).__name__}")


def marginal_cost(spec: AgentSpec, c: float, t: int) -> float:
    """C_l'(c) генератора, €cent/kWh."""
    return -float(marginal_value(spec, c, t))


# --- best response (concave proximal form) ---


def best_response(spec: AgentSpec, inp: BestResponseInput) -> NetPower:
    """argmax_p f_i(p) + λp - (ρ/2)(p - v)^2 на коробке агента."""
    t, lam, rho, v = inp.slot, inp.lam, inp.rho, inp.anchor
    lo, hi = feasible_box(spec, t)

    if isinstance(spec, TppSpec):
        a, b = spec.alpha_per_kw, spec.beta_per_kw
        return _clip((lam - b + rho * v) / (2.0 * a + rho), lo, hi)
    if isinstance(spec, PvSpec):
        return _clip(v + lam / rho, lo, hi)
    if isinstance(spec, GridSpec):
        return _clip(v + (lam - spec.tariff[t]) / rho, lo, hi)
    if isinstance(spec, LacSpec):
        x = _lac_penalized_demand(spec, t, lam, rho, -v)
        return -x
    raise TypeError(f"unknown agent spec {type(spec).__name__}")


def _lac_penalized_demand(spec: LacSpec, t: int, lam: float, rho: float, x_anchor: float) -> float:
    """Корень U'(x) - λ - ρ(x - x_anchor) на [m, M]: Ньютон с подстраховкой бисекцией."""
    m, big_m = spec.min_power[t], spec.max_power[t]
    u_max, k, x_pr = spec.u_max[t], spec.k_sensitivity, spec.desired_power[t]
    scale = k * x_pr

    def g(x: float) -> float:
        return lac_marginal_utility(x, u_max, k, x_pr) - lam - rho * (x - x_anchor)

    def dg(x: float) -> float:
        return -lac_marginal_utility(x, u_max, k, x_pr) / scale - rho

    # g строго убывает: знак на концах решает вопрос о клиппинге
    if g(m) <= 0.0:
        return m
    if g(big_m) >= 0.0:
        return big_m

    lo, hi = m, big_m
    x = _clip(x_anchor, lo, hi)
    tol = LAC_STEP_TOL * max(1.0, big_m)
    for _ in range(LAC_MAX_STEPS):
        gx = g(x)
        if gx == 0.0:
            return x
        if gx > 0.0:
            lo = x
        else:
            hi = x
        x_new = x - gx / dg(x)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) < tol:
            return x_new
        x = x_new

    raise SolverError(
        f"{spec.id}: best response did not converge in slot {t} "
        f"(lambda={lam}, rho={rho}, anchor={x_anchor})"
    )
