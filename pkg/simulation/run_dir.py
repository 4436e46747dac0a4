"""Каталог прогона: что пишет `solve` и читает `report`.

    scenario.json   решённый сценарий (после подстановки флагов)
    results.csv     slot,price_cent_per_kwh,iterations,converged,primal_residual,dual_residual,<agent ids...>
    trace.csv       slot,iter,lambda,rho,primal_norm,dual_norm,eps_pri,eps_dual,price_gap
    summary.txt     итоги для человека
"""
from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

import pandas as pd

from algorithms.admm import HorizonResult
from domain.errors import RunDataError, ScenarioError
from domain.models import Scenario
from domain.scenario import dump_scenario, load_scenario

SCENARIO_FILE = "scenario.json"
RESULTS_FILE = "results.csv"
TRACE_FILE = "trace.csv"
SUMMARY_FILE = "summary.txt"

RESULT_COLUMNS = ["slot", "price_cent_per_kwh", "iterations", "converged", "primal_residual", "dual_residual"]
TRACE_COLUMNS = ["slot", "iter", "lambda", "rho", "primal_norm", "dual_norm", "eps_pri", "eps_dual", "price_gap"]

FLOAT_FORMAT = "%.12g"


@dataclass(frozen=True)
class RunData:
    scenario: Scenario
    results: pd.DataFrame
    trace: pd.DataFrame

    @property
    def prices(self) -> pd.Series:
        return self.results["price_cent_per_kwh"]

    def powers(self, agent_id: str) -> pd.Series:
        return self.results[agent_id]


def results_frame(result: HorizonResult) -> pd.DataFrame:
    ids = result.scenario.agent_ids
    rows = []
    for s in result.slots:
        row = {
            "slot": s.slot,
            "price_cent_per_kwh": s.clearing_price,
            "iterations": s.iterations,
            "converged": int(s.converged),
            "primal_residual": s.primal_residual,
            "dual_residual": s.dual_residual,
        }
        row.update({aid: s.allocation.get(aid, float("nan")) for aid in ids})
        rows.append(row)
    return pd.DataFrame(rows, columns=RESULT_COLUMNS + list(ids))


def trace_frame(result: HorizonResult) -> pd.DataFrame:
    rows = [
        (s.slot, r.iter, r.lam, r.rho, r.primal_norm, r.dual_norm, r.eps_pri, r.eps_dual, r.price_gap)
        for s in result.slots
        for r in s.residual_trace
    ]
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def summary_text(result: HorizonResult) -> str:
    slots = result.slots
    converged = sum(s.converged for s in slots)
    lines = [
        f"slots: {len(slots)}",
        f"converged: {converged}/{len(slots)}",
    ]
    iters = sorted(s.iterations for s in slots if s.failure is None)
    if iters:
        mid = len(iters) // 2
        median = iters[mid] if len(iters) % 2 else (iters[mid - 1] + iters[mid]) / 2
        lines.append(f"iterations: min {iters[0]}, median {median:g}, max {iters[-1]}")
    prices = [s.clearing_price for s in slots if s.failure is None]
    if prices:
        lines.append(f"price range: {min(prices):.4f} .. {max(prices):.4f} cent/kWh")
    for s in slots:
        if s.failure is not None:
            lines.append(f"slot {s.slot} failed: {s.failure}")
        elif not s.converged:
            lines.append(f"slot {s.slot} did not converge in {s.iterations} iterations")
    return "\n".join(lines) + "\n"


def write_run(result: HorizonResult, out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    # всё считаем заранее, чтобы не оставить полупустой каталог
    scenario_json = dump_scenario(result.scenario)
    results = results_frame(result)
    trace = trace_frame(result)
    summary = summary_text(result)

    out.mkdir(parents=True, exist_ok=True)
    (out / SCENARIO_FILE).write_text(scenario_json + "\n", encoding="utf-8")
    results.to_csv(out / RESULTS_FILE, index=False, float_format=FLOAT_FORMAT)
    trace.to_csv(out / TRACE_FILE, index=False, float_format=FLOAT_FORMAT)
    (out / SUMMARY_FILE).write_text(summary, encoding="utf-8")
    return out


def _read_csv(path: Path, required: List[str]) -> pd.DataFrame:
    if not path.is_file():
        raise RunDataError(f"missing {path.name} in {path.parent}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise RunDataError(f"{path}: cannot parse CSV: {exc}") from exc
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise RunDataError(f"{path}: missing column(s) {', '.join(missing)}")
    return frame


def read_run(run_dir: Union[str, Path]) -> RunData:
    root = Path(run_dir)
    if not root.is_dir():
        raise RunDataError(f"run directory {root} does not exist")
    scenario_path = root / SCENARIO_FILE
    if not scenario_path.is_file():
        raise RunDataError(f"missing {SCENARIO_FILE} in {root}")
    try:
        scenario = load_scenario(scenario_path.read_text(encoding="utf-8"))
    except ScenarioError as exc:
        raise RunDataError(f"{scenario_path}: {exc}") from exc

    results = _read_csv(root / RESULTS_FILE, RESULT_COLUMNS + list(scenario.agent_ids))
    trace = _read_csv(root / TRACE_FILE, TRACE_COLUMNS)
    if len(results) != scenario.time_grid.slot_count:
        raise RunDataError(
            f"{root / RESULTS_FILE}: {len(results)} rows for {scenario.time_grid.slot_count} slots"
        )
    results = results.sort_values("slot").reset_index(drop=True)
    return RunData(scenario=scenario, results=results, trace=trace)
