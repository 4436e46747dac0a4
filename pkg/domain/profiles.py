# domain/profiles.py
from __future__ import annotations
from typing import List
import math

import numpy as np

from domain.models import GridSpec, LacSpec, PvSpec, Scenario, SolverOptions, TimeGrid, TppSpec

OFF_PEAK_TARIFF = 9.87   # €cent/kWh, 08:00-18:00
PEAK_TARIFF = 18.21      # €cent/kWh, 18:00-08:00
GRID_MAX_DRAW = 2000.0   # kW
TPP_ALPHA = 0.02         # €cent/kWh per MW
TPP_BETA = 11.5          # €cent/kWh
TPP_MIN = 200.0
TPP_MAX = 1000.0
PV_PEAK = 1000.0
LAC_MAX = 200.0
K_DEFAULT = 0.217

PROFILES = ("uncorrelated", "daytime")


def bi_hourly_tariff(hour: float) -> float:
    return OFF_PEAK_TARIFF if 8.0 <= hour < 18.0 else PEAK_TARIFF


def pv_availability(hour: float, peak_kw: float = PV_PEAK) -> float:
    """Колокол от 06:00 до 20:00 с максимумом около 13:00."""
    phase = (hour - 6.0) / 14.0
    if not 0.0 < phase < 1.0:
        return 0.0
    return peak_kw * math.sin(math.pi * phase) ** 1.5


def _lac_profile(rng: np.random.Generator, mids: np.ndarray, profile: str) -> np.ndarray:
    if profile == "uncorrelated":
        # вечерний пик зарядки, фаза своя у каждого LAC
        base = rng.uniform(60.0, 110.0)
        peak_hour = rng.uniform(18.0, 23.0)
        amp = rng.uniform(0.20, 0.35)
        level = 0.7
    elif profile == "daytime":
        base = rng.uniform(40.0, 80.0)
        peak_hour = rng.uniform(11.0, 15.0)
        amp = rng.uniform(0.30, 0.50)
        level = 0.7
    else:
        raise ValueError(f"unknown profile {profile!r}, expected one of {PROFILES}")

    shape = level + amp * np.cos(2.0 * np.pi * (mids - peak_hour) / 24.0)
    # немного гладкого шума: две гармоники со случайной фазой
    for period in (6.0, 8.0):
        shape += rng.uniform(0.0, 0.05) * np.sin(2.0 * np.pi * mids / period + rng.uniform(0, 2 * np.pi))
    return np.clip(base * shape, 5.0, 0.95 * LAC_MAX)


def build_reference_scenario(
    seed: int = 7,
    profile: str = "uncorrelated",
    n_lacs: int = 20,
    slot_count: int = 24,
    solver: SolverOptions | None = None,
) -> Scenario:
    """Эталонный MLA по зерну: 20 LAC, сеть + ТЭС + PV."""
    if n_lacs < 1:
        raise ValueError("n_lacs must be positive")
    dt = 24.0 / slot_count
    mids = (np.arange(slot_count) + 0.5) * dt
    starts = [t * dt for t in range(slot_count)]

    tariff = [bi_hourly_tariff(h) for h in starts]
    rng = np.random.default_rng(seed)

    lacs: List[LacSpec] = []
    for r in range(n_lacs):
        desired = _lac_profile(rng, mids, profile)
        lacs.append(
            LacSpec(
                id=f"LAC{r + 1:02d}",
                desired_power=tuple(float(x) for x in desired),
                min_power=tuple(0.0 for _ in range(slot_count)),
                max_power=tuple(LAC_MAX for _ in range(slot_count)),
                k_sensitivity=K_DEFAULT,
                forecast_price=tuple(tariff),
            )
        )

    generators = (
        GridSpec(id="GRID", tariff=tuple(tariff), max_draw=tuple(GRID_MAX_DRAW for _ in range(slot_count))),
        TppSpec(
            id="TPP",
            alpha=TPP_ALPHA,
            beta=TPP_BETA,
            gamma=0.0,
            min_gen=tuple(TPP_MIN for _ in range(slot_count)),
            max_gen=tuple(TPP_MAX for _ in range(slot_count)),
        ),
        PvSpec(id="PV", availability=tuple(pv_availability(float(h)) for h in mids)),
    )

    return Scenario(
        time_grid=TimeGrid(slot_count=slot_count, slot_duration_hours=dt),
        lacs=tuple(lacs),
        generators=generators,
        solver=solver or SolverOptions(),
    )
