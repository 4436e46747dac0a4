from __future__ import annotations
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from domain.errors import UmaxOverflowError

AgentId = str

# Соглашение о знаках: генераторы p = c >= 0, LAC p = -x <= 0, баланс sum(p) = 0.
NetPower = float

Series = Tuple[float, ...]

KW_PER_MW = 1000.0


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)


class TimeGrid(_Frozen):
    slot_count: int = Field(gt=0)
    slot_duration_hours: float = Field(gt=0)


class SolverOptions(_Frozen):
    """
    Настройки ADMM. rho_initial задаётся в €cent/kWh на МВт (решатель переводит в кВт).
    eps_price: допустимое расхождение цен агентов на последней итерации, €cent/kWh.
    """

    rho_initial: float = Field(default=1.0, gt=0)
    eps_abs: float = Field(default=1e-4, gt=0)
    eps_rel: float = Field(default=1e-5, gt=0)
    eps_price: float = Field(default=2e-4, gt=0)
    max_iterations: int = Field(default=500, ge=1)

    @property
    def rho_initial_per_kw(self) -> float:
        return self.rho_initial / KW_PER_MW


class LacSpec(_Frozen):
    kind: Literal["lac"] = "lac"
    id: AgentId = Field(pattern=r"^[A-Za-z0-9_.:-]+$")
    desired_power: Series
    min_power: Series
    max_power: Series
    k_sensitivity: float = Field(gt=0)
    forecast_price: Series
    u_max: Series

    @model_validator(mode="before")
    @classmethod
    def _defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        desired = data.get("desired_power")
        if desired is None:
            return data
        if data.get("min_power") is None:
            data["min_power"] = [0.0] * len(desired)
        if data.get("u_max") is None:
            # отложенный импорт: algorithms.agents сам импортирует этот модуль
            from algorithms.agents import calibrate_umax

            try:
                data["u_max"] = [
                    calibrate_umax(lam, data["k_sensitivity"], x_pr)
                    for lam, x_pr in zip(data["forecast_price"], desired)
                ]
            except UmaxOverflowError:
                raise
            except (KeyError, TypeError, ValueError):
                # ошибки полей сообщит обычная валидация
                return data
        return data

    @model_validator(mode="after")
    def _check(self) -> "LacSpec":
        n = len(self.desired_power)
        for name in ("min_power", "max_power", "forecast_price", "u_max"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} slots, desired_power has {n}")
        for t in range(n):
            m, x_pr, big_m = self.min_power[t], self.desired_power[t], self.max_power[t]
            if x_pr <= 0:
                raise ValueError(f"desired_power[{t}] must be positive, got {x_pr}")
            if m < 0:
                raise ValueError(f"min_power[{t}] must be nonnegative, got {m}")
            if not m <= x_pr <= big_m:
                raise ValueError(
                    f"min_power[{t}] <= desired_power[{t}] <= max_power[{t}] violated ({m}, {x_pr}, {big_m})"
                )
            if self.forecast_price[t] <= 0:
                raise ValueError(f"forecast_price[{t}] must be positive")
            if self.u_max[t] <= 0:
                raise ValueError(f"u_max[{t}] must be positive")
        return self

    @property
    def slot_count(self) -> int:
        return len(self.desired_power)


class TppSpec(_Frozen):
    """ТЭС. alpha/beta заданы в расчёте на МВт (см. alpha_per_kw)."""

    kind: Literal["tpp"] = "tpp"
    id: AgentId = Field(pattern=r"^[A-Za-z0-9_.:-]+$")
    alpha: float = Field(ge=0)
    beta: float
    gamma: float = 0.0
    min_gen: Series
    max_gen: Series

    @model_validator(mode="after")
    def _check(self) -> "TppSpec":
        if len(self.min_gen) != len(self.max_gen):
            raise ValueError("min_gen and max_gen differ in length")
        for t, (lo, hi) in enumerate(zip(self.min_gen, self.max_gen)):
            if not 0 <= lo <= hi:
                raise ValueError(f"0 <= min_gen[{t}] <= max_gen[{t}] violated ({lo}, {hi})")
        return self

    @property
    def alpha_per_kw(self) -> float:
        # α·c_MW² [€cent/kWh·MW] == (α/1000)·c_kW² in €cent/h
        return self.alpha / KW_PER_MW

    @property
    def beta_per_kw(self) -> float:
        return self.beta

    @property
    def slot_count(self) -> int:
        return len(self.min_gen)


class PvSpec(_Frozen):
    kind: Literal["pv"] = "pv"
    id: AgentId = Field(pattern=r"^[A-Za-z0-9_.:-]+$")
    availability: Series

    @model_validator(mode="after")
    def _check(self) -> "PvSpec":
        for t, a in enumerate(self.availability):
            if a < 0:
                raise ValueError(f"availability[{t}] must be nonnegative, got {a}")
        return self

    @property
    def slot_count(self) -> int:
        return len(self.availability)


class GridSpec(_Frozen):
    kind: Literal["grid"] = "grid"
    id: AgentId = Field(pattern=r"^[A-Za-z0-9_.:-]+$")
    tariff: Series
    max_draw: Series

    @model_validator(mode="after")
    def _check(self) -> "GridSpec":
        if len(self.tariff) != len(self.max_draw):
            raise ValueError("tariff and max_draw differ in length")
        for t, (k, d) in enumerate(zip(self.tariff, self.max_draw)):
            if k <= 0:
                raise ValueError(f"tariff[{t}] must be positive, got {k}")
            if d <= 0:
                raise ValueError(f"max_draw[{t}] must be positive, got {d}")
        return self

    @property
    def slot_count(self) -> int:
        return len(self.tariff)


GeneratorSpec = Annotated[Union[TppSpec, PvSpec, GridSpec], Field(discriminator="kind")]
AgentSpec = Union[LacSpec, TppSpec, PvSpec, GridSpec]


class Scenario(_Frozen):
    time_grid: TimeGrid
    lacs: Tuple[LacSpec, ...]
    generators: Tuple[GeneratorSpec, ...]
    solver: SolverOptions = SolverOptions()

    @model_validator(mode="after")
    def _check(self) -> "Scenario":
        if not self.lacs:
            raise ValueError("at least one LAC is required")
        if not self.generators:
            raise ValueError("at least one generator is required")
        n = self.time_grid.slot_count
        for i, lac in enumerate(self.lacs):
            if lac.slot_count != n:
                raise ValueError(f"lacs[{i}] has {lac.slot_count} slots, time_grid has {n}")
        for i, gen in enumerate(self.generators):
            if gen.slot_count != n:
                raise ValueError(f"generators[{i}] has {gen.slot_count} slots, time_grid has {n}")
        seen = set()
        for spec in self.agents:
            if spec.id in seen:
                raise ValueError(f"duplicate agent id {spec.id!r}")
            seen.add(spec.id)
        return self

    @property
    def agents(self) -> List[AgentSpec]:
        """Фиксированный порядок: сначала LAC, потом генераторы, оба в порядке документа."""
        return [*self.lacs, *self.generators]

    @property
    def agent_ids(self) -> List[AgentId]:
        return [a.id for a in self.agents]

    def agent(self, agent_id: AgentId) -> AgentSpec:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(agent_id)

    def grid(self) -> Optional[GridSpec]:
        return next((g for g in self.generators if isinstance(g, GridSpec)), None)
