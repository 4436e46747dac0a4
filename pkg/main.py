from __future__ import annotations
from pathlib import Path
from typing import List, Optional
import logging
import sys
import threading

import click
import pandas as pd

from algorithms.admm import HorizonResult, solve_slot
from algorithms.oracle import clear_by_bisection, kkt_violations
from domain.errors import (
    AgentDomainError,
    HorizonError,
    OracleError,
    ProtocolError,
    RunDataError,
    ScenarioError,
    SolverError,
)
from domain.models import Scenario
from domain.profiles import PROFILES, build_reference_scenario
from domain.scenario import read_scenario, with_solver
from simulation.bills import compare_bills, consumption_error, generator_income, profile_frame
from simulation.engine import solve_horizon
from simulation.run_dir import read_run, write_run
from transport.agent import run_agent
from transport.channels import Address, Endpoint
from transport.coordinator import REGISTRATION_TIMEOUT, REPLY_TIMEOUT, run_coordinator
from visualization.svg_plots import lambda_trace_plot, price_plot, profile_plot

logger = logging.getLogger(__name__)

EXIT_NOT_CONVERGED = 3

HANDLED_ERRORS = (
    ScenarioError,
    AgentDomainError,
    SolverError,
    HorizonError,
    OracleError,
    ProtocolError,
    RunDataError,
    OSError,
    OverflowError,
    ValueError,
)


def load_scenario_arg(source: str, seed: int) -> Scenario:
    """`reference` или `reference:<profile>` строит эталонный сценарий; иначе это путь к JSON."""
    name, _, profile = source.partition(":")
    if name == "reference":
        profile = profile or "uncorrelated"
        if profile not in PROFILES:
            raise click.BadParameter(f"unknown profile {profile!r}, expected one of {PROFILES}", param_hint="--scenario")
        return build_reference_scenario(seed=seed, profile=profile)
    return read_scenario(source)


def solver_options(f):
    f = click.option("--rho0", type=float, default=None, help="Initial ρ, €cent/kWh per MW.")(f)
    f = click.option("--eps-abs", type=float, default=None)(f)
    f = click.option("--eps-rel", type=float, default=None)(f)
    f = click.option("--eps-price", type=float, default=None, help="Price gap tolerance, €cent/kWh.")(f)
    f = click.option("--max-iter", type=int, default=None)(f)
    f = click.option("--seed", type=int, default=7, show_default=True, help="Seed of the reference scenario.")(f)
    f = click.option(
        "--scenario", "scenario_source", default="reference", show_default=True,
        help="Scenario JSON file, or reference[:daytime].",
    )(f)
    return f


def _prepared(scenario_source, seed, rho0, eps_abs, eps_rel, eps_price, max_iter) -> Scenario:
    scenario = load_scenario_arg(scenario_source, seed)
    return with_solver(
        scenario, rho_initial=rho0, eps_abs=eps_abs, eps_rel=eps_rel, eps_price=eps_price, max_iterations=max_iter,
    )


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Per-iteration DEBUG logging.")
def cli(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _connect_host(address: Address) -> str:
    host, port = address
    if host in ("0.0.0.0", "::", ""):
        host = "127.0.0.1"
    return f"{host}:{port}"


def _solve_tcp(
    scenario: Scenario,
    listen: str,
    spawn_agents: bool,
    timeout: float,
    registration_timeout: float,
) -> HorizonResult:
    threads: List[threading.Thread] = []

    def agent_main(address: str, spec) -> None:
        try:
            run_agent(Endpoint.tcp(address), spec)
        except Exception as exc:  # noqa: BLE001
            logger.error("agent %s stopped: %s", spec.id, exc)

    def on_listening(address: Optional[Address]) -> None:
        click.echo(f"coordinator listening on {address[0]}:{address[1]}", err=True)
        if not spawn_agents:
            return
        target = _connect_host(address)
        for spec in scenario.agents:
            th = threading.Thread(target=agent_main, args=(target, spec), name=f"agent-{spec.id}", daemon=True)
            th.start()
            threads.append(th)

    result = run_coordinator(
        Endpoint.tcp(listen), scenario,
        registration_timeout=registration_timeout, reply_timeout=timeout, on_listening=on_listening,
    )
    for th in threads:
        th.join(timeout=5.0)
    return result


@cli.command()
@solver_options
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True, help="Run directory to write.")
@click.option("--mode", type=click.Choice(["inprocess", "tcp"]), default="inprocess", show_default=True)
@click.option("--listen", default="127.0.0.1:0", show_default=True, help="Coordinator address in tcp mode.")
@click.option("--workers", type=int, default=1, show_default=True, help="Slot threads in inprocess mode.")
@click.option("--timeout", type=float, default=REPLY_TIMEOUT, show_default=True, help="Per-iteration reply timeout, s.")
@click.option("--registration-timeout", type=float, default=REGISTRATION_TIMEOUT, show_default=True)
@click.option("--no-spawn-agents", is_flag=True, help="In tcp mode, wait for external serve-agent processes.")
@click.pass_context
def solve(
    ctx, scenario_source, seed, max_iter, eps_price, eps_rel, eps_abs, rho0,
    out_dir, mode, listen, workers, timeout, registration_timeout, no_spawn_agents,
) -> None:
    """Clear every slot of the horizon and write a run directory."""
    try:
        scenario = _prepared(scenario_source, seed, rho0, eps_abs, eps_rel, eps_price, max_iter)
        if mode == "tcp":
            result = _solve_tcp(scenario, listen, not no_spawn_agents, timeout, registration_timeout)
        else:
            result = solve_horizon(scenario, workers=workers)
        out = write_run(result, out_dir)
    except HANDLED_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc

    ok = sum(s.converged for s in result.slots)
    click.echo(f"{ok}/{len(result.slots)} slots converged; results in {out}")
    for s in result.slots:
        status = "ok" if s.converged else (f"FAILED: {s.failure}" if s.failure else "not converged")
        click.echo(f"  slot {s.slot:2d}: price {s.clearing_price:8.4f} in {s.iterations:4d} iterations  {status}")
    if not result.converged:
        ctx.exit(EXIT_NOT_CONVERGED)


@cli.command()
@solver_options
@click.option("--slot", type=int, default=None, help="Compare one slot only.")
@click.option("--out", "out_file", type=click.Path(dir_okay=False), default=None, help="CSV file for the comparison.")
def oracle(scenario_source, seed, max_iter, eps_price, eps_rel, eps_abs, rho0, slot, out_file) -> None:
    """Compare ADMM prices and allocations with the bisection equilibrium."""
    try:
        scenario = _prepared(scenario_source, seed, rho0, eps_abs, eps_rel, eps_price, max_iter)
    except HANDLED_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc

    slots = range(scenario.time_grid.slot_count) if slot is None else [slot]
    rows = []
    failed = 0
    for t in slots:
        if not 0 <= t < scenario.time_grid.slot_count:
            raise click.BadParameter(f"slot {t} out of range", param_hint="--slot")
        row = {"slot": t}
        try:
            admm = solve_slot(scenario, t)
            ref = clear_by_bisection(scenario, t)
        except HANDLED_ERRORS as exc:
            failed += 1
            row["error"] = str(exc)
            rows.append(row)
            click.echo(f"slot {t}: {exc}", err=True)
            continue
        row.update(
            admm_price=admm.clearing_price,
            oracle_price=ref.price,
            price_deviation=abs(admm.clearing_price - ref.price),
            max_allocation_deviation=max(abs(admm.allocation[a] - ref.allocation[a]) for a in scenario.agent_ids),
            max_kkt_violation=max(kkt_violations(scenario, t, admm.clearing_price, admm.allocation).values()),
            converged=int(admm.converged),
            error="",
        )
        rows.append(row)

    frame = pd.DataFrame(rows)
    if out_file:
        frame.to_csv(out_file, index=False, float_format="%.12g")
    click.echo(frame.to_string(index=False))
    if "price_deviation" in frame and frame["price_deviation"].notna().any():
        click.echo(
            f"max price deviation {frame['price_deviation'].max():.3g} cent/kWh, "
            f"max allocation deviation {frame['max_allocation_deviation'].max():.3g} kW"
        )
    if failed:
        raise click.ClickException(f"{failed} slot(s) could not be cleared by bisection")


@cli.command()
@click.option("--run", "--out", "run_dir", type=click.Path(file_okay=False), required=True, help="Run directory.")
@click.option("--slot", type=int, default=None, help="Slot for the λ trace plot (default: slowest slot).")
def report(run_dir, slot) -> None:
    """Plots, profile, bills and per-agent tables for an existing run directory."""
    try:
        run = read_run(run_dir)
        if slot is None:
            slot = int(run.results.loc[run.results["iterations"].idxmax(), "slot"])
        grid = run.scenario.grid()
        profile = profile_frame(run)
        bills = compare_bills(run)
        # сначала всё считаем, потом пишем: при ошибке каталог остаётся как был
        artifacts = {
            "price.svg": price_plot(run.prices, None if grid is None else list(grid.tariff)),
            f"lambda_trace_slot{slot}.svg": lambda_trace_plot(run.trace, slot),
            "profile.svg": profile_plot(profile),
            "profile.csv": profile.to_csv(index=False, float_format="%.12g").encode(),
            "bills.csv": bills.frame().to_csv(index=False, float_format="%.12g").encode(),
            "consumption_error.csv": consumption_error(run).to_csv(index=False, float_format="%.12g").encode(),
            "generator_income.csv": generator_income(run).to_csv(index=False, float_format="%.12g").encode(),
        }
    except HANDLED_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc

    for name, data in artifacts.items():
        (Path(run_dir) / name).write_bytes(data)
    click.echo(f"wrote {len(artifacts)} artifacts to {run_dir}")
    click.echo(
        f"daily bill, all LACs: {bills.with_der.total:.2f} EUR with DER, "
        f"{bills.grid_only.total:.2f} EUR grid-only"
    )


@cli.command("serve-agent")
@click.option("--scenario", "scenario_source", default="reference", show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--agent-id", required=True)
@click.option("--connect", "address", required=True, help="Coordinator host:port.")
@click.option("--timeout", type=float, default=None, help="Give up after this many idle seconds.")
@click.pass_context
def serve_agent(ctx, scenario_source, seed, agent_id, address, timeout) -> None:
    """Run one agent against a remote coordinator until the horizon completes."""
    try:
        scenario = load_scenario_arg(scenario_source, seed)
        try:
            spec = scenario.agent(agent_id)
        except KeyError:
            raise click.BadParameter(f"no agent {agent_id!r} in the scenario", param_hint="--agent-id") from None
        session = run_agent(Endpoint.tcp(address), spec, timeout=timeout)
    except TimeoutError as exc:
        raise click.ClickException(f"no message from the coordinator within {timeout}s") from exc
    except HANDLED_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc

    converged = sum(d.converged for d in session.done)
    click.echo(f"{agent_id}: {len(session.done)} slots done ({converged} converged)")
    if converged < len(session.done):
        ctx.exit(EXIT_NOT_CONVERGED)


if __name__ == "__main__":
    cli()
