"""Command-line surface: run-equilibrium, sweep, compare-policies, validate-scenario.

Exit codes: 0 on success (equilibrium converged), 2 on a non-converged solve,
1 on input errors. Output directories get a run manifest; all result files
are deterministic and byte-identical across reruns and worker counts (the
manifest itself carries wall-clock timings).
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click

from tcsim import __version__
from tcsim.bilevel import compare_policies, comparison_table, grid_search
from tcsim.equilibrium import solve_equilibrium
from tcsim.output import (
    COMPARE_HEADER,
    write_compare_outputs,
    write_equilibrium_outputs,
    write_json,
    write_sweep_outputs,
)
from tcsim.scenario import CorridorScenario, PolicyParams, ScenarioError, load_scenario

OUTPUT_ROOT_ENV = "TCSIM_OUTPUT_ROOT"


def _default_out(command: str, scenario_path: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / f"{command}-{Path(scenario_path).stem}"


def _write_manifest(out_dir: Path, command: str, scenario_path: str, overrides: dict, started: float) -> None:
    write_json(
        out_dir / "manifest.json",
        {
            "command": command,
            "scenario": str(scenario_path),
            "overrides": overrides,
            "output_dir": str(out_dir),
            "tool_version": __version__,
            "wall_clock_s": time.time() - started,
        },
    )


def _parse_policy(text: str | None, default: PolicyParams) -> PolicyParams:
    """Parse 'k=..,tau=..,xi=..' (any subset) on top of the scenario default."""
    if not text:
        return default
    values = {"k": default.k, "tau": default.tau, "xi": default.xi}
    for part in text.split(","):
        if not part.strip():
            continue
        try:
            key, raw = part.split("=")
            key = key.strip()
            if key not in values:
                raise ValueError(f"unknown policy field '{key}'")
            values[key] = int(raw)
        except ValueError as exc:
            raise click.UsageError(f"bad --policy entry '{part}': {exc}") from exc
    return PolicyParams(**values)


def _parse_range(spec: str) -> list:
    """'50:58:2' inclusive range or a single integer."""
    parts = spec.split(":")
    if len(parts) == 1:
        return [int(parts[0])]
    if len(parts) != 3:
        raise click.UsageError(f"bad range '{spec}' (want start:stop:step)")
    start, stop, step = (int(p) for p in parts)
    if step <= 0 or stop < start:
        raise click.UsageError(f"empty range '{spec}'")
    return list(range(start, stop + 1, step))


def _parse_grid(text: str | None, scenario: CorridorScenario):
    if not text:
        bl = scenario.bilevel
        if not (bl.k_values and bl.tau_values and bl.xi_values):
            raise click.UsageError("scenario has no bilevel grid; pass --grid")
        return list(bl.k_values), list(bl.tau_values), list(bl.xi_values)
    ranges = {}
    for part in text.split(","):
        key, spec = part.split("=")
        ranges[key.strip()] = _parse_range(spec.strip())
    missing = {"k", "tau", "xi"} - set(ranges)
    if missing:
        raise click.UsageError(f"--grid missing {sorted(missing)}")
    return ranges["k"], ranges["tau"], ranges["xi"]


def _load(scenario_path: str) -> CorridorScenario:
    try:
        return load_scenario(scenario_path)
    except ScenarioError as exc:
        raise click.ClickException(str(exc)) from exc


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Corridor equilibrium and credit-scheme policy tools."""


@main.command("run-equilibrium")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(), help="Scenario JSON file.")
@click.option("--policy", "policy_text", default=None, help="Override 'k=..,tau=..,xi=..'.")
@click.option("--out", "out_dir", default=None, type=click.Path(), help="Output directory.")
@click.option("--trace", is_flag=True, help="Also dump per-group costs and probabilities.")
@click.option("--disable-operations", is_flag=True, help="Zero waits / unlimited capacity variant.")
def cmd_run_equilibrium(scenario_path, policy_text, out_dir, trace, disable_operations) -> None:
    """Solve one equilibrium and write the result files."""
    started = time.time()
    scenario = _load(scenario_path)
    policy = _parse_policy(policy_text, scenario.policy)
    config = scenario.solver
    if disable_operations:
        from dataclasses import replace

        config = replace(config, operations_enabled=False)
    result = solve_equilibrium(scenario, policy, config=config)
    out = Path(out_dir) if out_dir else _default_out("run-equilibrium", scenario_path)
    write_equilibrium_outputs(out, scenario, policy, result, trace_costs=trace)
    _write_manifest(
        out,
        "run-equilibrium",
        scenario_path,
        {"policy": policy_text, "trace": trace, "disable_operations": disable_operations},
        started,
    )
    click.echo(
        f"{'converged' if result.converged else 'NOT converged'} "
        f"in {result.iterations} iterations, ||F|| = {result.residual_norm:.3e}, "
        f"price = {result.decision.price:.6f} -> {out}"
    )
    if not result.converged:
        sys.exit(2)


@main.command("sweep")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--grid", "grid_text", default=None, help="e.g. 'k=50:58:2,tau=64:72:2,xi=2:2:1'.")
@click.option("--jobs", default=1, show_default=True, help="Parallel policy evaluations.")
@click.option("--out", "out_dir", default=None, type=click.Path())
def cmd_sweep(scenario_path, grid_text, jobs, out_dir) -> None:
    """Grid-search credit parameters and fleet size."""
    started = time.time()
    scenario = _load(scenario_path)
    k_values, tau_values, xi_values = _parse_grid(grid_text, scenario)
    result = grid_search(scenario, k_values, tau_values, xi_values, jobs=jobs)
    out = Path(out_dir) if out_dir else _default_out("sweep", scenario_path)
    write_sweep_outputs(out, result)
    _write_manifest(out, "sweep", scenario_path, {"grid": grid_text, "jobs": jobs}, started)
    opt = result.optimum
    if opt is None:
        click.echo(f"no feasible optimum -> {out}")
    else:
        click.echo(
            f"{len(result.points)} points; optimum k={opt.policy.k} tau={opt.policy.tau} "
            f"xi={opt.policy.xi} total={opt.total:.2f} EUR -> {out}"
        )


@main.command("compare-policies")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--policy", "policy_text", default=None, help="Combined-quadrant 'k=..,tau=..,xi=..'.")
@click.option("--out", "out_dir", default=None, type=click.Path())
def cmd_compare_policies(scenario_path, policy_text, out_dir) -> None:
    """Evaluate no-policy / TCS-only / DRAS-only / combined quadrants."""
    started = time.time()
    scenario = _load(scenario_path)
    bl = scenario.bilevel
    default = PolicyParams(k=bl.compare_k, tau=bl.compare_tau, xi=bl.compare_xi)
    combined = _parse_policy(policy_text, default)
    rows = compare_policies(scenario, combined=combined)
    table = comparison_table(rows)
    out = Path(out_dir) if out_dir else _default_out("compare-policies", scenario_path)
    write_compare_outputs(out, table)
    _write_manifest(out, "compare-policies", scenario_path, {"policy": policy_text}, started)

    cols = ["scenario", "travel_time_h", "distance_km", "credit_price_eur", "car_share", "objective_eur"]
    widths = {c: max(len(c), 14) for c in cols}
    click.echo("  ".join(c.ljust(widths[c]) for c in cols))
    for row in table:
        cells = []
        for c in cols:
            v = row[c]
            cells.append((f"{v:.4f}" if isinstance(v, float) else str(v)).ljust(widths[c]))
        click.echo("  ".join(cells))
    click.echo(f"-> {out}")


@main.command("validate-scenario")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
def cmd_validate_scenario(scenario_path) -> None:
    """Parse and validate a scenario file, reporting the first violation."""
    scenario = _load(scenario_path)
    click.echo(
        f"OK: {scenario.name}; {len(scenario.stations)} stations, "
        f"{scenario.n_groups} demand groups, {scenario.grid.intervals} intervals, "
        f"total demand {scenario.total_demand():g}"
    )


if __name__ == "__main__":
    main()
