from __future__ import annotations

import pytest

from domain.models import Scenario
from domain.profiles import build_reference_scenario
from tests.factories import TIGHT, grid, lac, pv, scenario, tpp


@pytest.fixture
def lac_and_grid() -> Scenario:
    return scenario([lac(x_pr=100.0, forecast=10.0)], [grid(tariff=10.0)])


@pytest.fixture
def mixed_slot() -> Scenario:
    """Два LAC, сеть, ТЭС и PV в одном слоте; при пиковом тарифе ТЭС работает на полную."""
    return scenario(
        [lac("L1", x_pr=900.0, big_m=1500.0, forecast=18.21), lac("L2", x_pr=600.0, big_m=1200.0, forecast=18.21)],
        [grid(tariff=18.21, max_draw=2000.0), tpp(), pv(availability=300.0)],
    )


@pytest.fixture(scope="session")
def reference() -> Scenario:
    return build_reference_scenario(seed=7)


@pytest.fixture(scope="session")
def reference_tight() -> Scenario:
    return build_reference_scenario(seed=7, solver=TIGHT)
