"""Deterministic result files: CSVs (RFC-4180-style) and JSON dumps.

Numbers are serialized with 12 significant digits and fixed column orders so
manifest-identical reruns produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from tcsim.bilevel import GridResult, PolicyPoint
from tcsim.equilibrium import EquilibriumResult
from tcsim.scenario import BUS, DRAS, MODES, CorridorScenario, PolicyParams


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def write_csv(path: Path, header: list, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def equilibrium_payload(scenario: CorridorScenario, policy: PolicyParams, result: EquilibriumResult) -> dict:
    d = result.decision
    diag = result.diagnostics
    market = diag["market"]
    return {
        "scenario": scenario.name,
        "policy": {"k": policy.k, "tau": policy.tau, "xi": policy.xi},
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "residual_norm": float(result.residual_norm),
        "price": float(d.price),
        "shares": {
            "group_ids": [g.group_id for g in scenario.groups],
            "car": [float(v) for v in d.x],
            "bus": [float(v) for v in d.y],
            "dras": [float(v) for v in d.z],
        },
        "aggregate_shares": diag["aggregate_shares"],
        "market": {
            "supply": market.supply,
            "consumption": market.consumption,
            "residual": market.residual,
            "price": market.price,
        },
        "share_sum_error": diag["share_sum_error"],
        "total_wait_pax_s": diag["total_wait_pax_s"],
        "person_travel_s": diag["person_travel_s"],
        "vkt_m": diag["vkt_m"],
        "operations_enabled": diag["operations_enabled"],
    }


def write_equilibrium_outputs(
    out_dir: Path,
    scenario: CorridorScenario,
    policy: PolicyParams,
    result: EquilibriumResult,
    trace_costs: bool = False,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    diag = result.diagnostics
    d = result.decision
    grid = scenario.grid
    bounds = grid.boundaries

    write_json(out_dir / "equilibrium.json", equilibrium_payload(scenario, policy, result))

    intervals = scenario.group_intervals()
    rows = [
        [g.group_id, intervals[i], g.origin, g.destination, g.demand, d.x[i], d.y[i], d.z[i]]
        for i, g in enumerate(scenario.groups)
    ]
    write_csv(
        out_dir / "shares.csv",
        ["group", "interval", "origin", "destination", "demand", "car", "bus", "dras"],
        rows,
    )

    n, v, z = diag["accumulation"], diag["speed_kmh"], diag["distance_clock_m"]
    q_in = np.zeros(grid.intervals)
    np.add.at(q_in, intervals, scenario.group_demands() * d.x)
    speed_rows = [
        [m, bounds[m], bounds[m + 1], n[m], v[m], z[m + 1], q_in[m]] for m in range(grid.intervals)
    ]
    write_csv(
        out_dir / "speeds.csv",
        ["interval", "t_start_s", "t_end_s", "accumulation_veh", "speed_kmh", "clock_end_m", "q_in"],
        speed_rows,
    )

    eta = scenario.params.eta_per_pax
    curves = diag["curves"]
    wait_rows = []
    waits = diag["waits"]  # (S, M, 2) bus, dras
    for s_idx, st in enumerate(scenario.stations):
        for mode_idx, mode in enumerate((BUS, DRAS)):
            arr = curves.arrival_curves.get((st.station_id, mode)) if curves.arrival_curves else None
            for m in range(grid.intervals):
                w = waits[s_idx, m, mode_idx]
                cohort = (arr.cumulative[m + 1] - arr.cumulative[m]) if arr is not None else 0.0
                aw = w / cohort if cohort > 0 else 0.0
                wait_rows.append([st.station_id, mode, m, w, aw, eta * w])
    write_csv(out_dir / "waits.csv", ["station", "mode", "interval", "W_pax_s", "AW_s", "PAW_s"], wait_rows)

    market = diag["market"]
    write_csv(
        out_dir / "market.csv",
        ["supply_credits", "consumption_credits", "residual_credits", "price_eur"],
        [[market.supply, market.consumption, market.residual, market.price]],
    )

    write_csv(
        out_dir / "trace.csv",
        ["iteration", "merit", "residual_norm", "step_size", "backtracks", "damped"],
        [[t.iteration, t.merit, t.residual_norm, t.step_size, t.backtracks, t.damped] for t in result.trace],
    )

    timeline_rows = []
    for tl in list(curves.bus_timelines) + list(curves.dras_timelines):
        for visit in tl.visits:
            timeline_rows.append(
                [
                    tl.vehicle_id,
                    tl.mode,
                    visit.station_id,
                    visit.visit_index,
                    visit.t_arr_s,
                    visit.t_dep_s if visit.t_dep_s is not None else "",
                    visit.boarded,
                ]
            )
    write_csv(
        out_dir / "timelines.csv",
        ["vehicle_id", "mode", "station", "visit", "t_arr_s", "t_dep_s", "boarded"],
        timeline_rows,
    )

    arrival_rows, service_rows = [], []
    if curves.arrival_curves:
        for (sid, mode), arr in sorted(curves.arrival_curves.items()):
            for t, c in zip(arr.boundaries_s, arr.cumulative):
                arrival_rows.append([sid, mode, t, c])
    for mode, jumps in ((BUS, curves.bus_jumps), (DRAS, curves.dras_jumps)):
        for sid in sorted(jumps):
            times, sizes = jumps[sid]
            cum = 0.0
            for t, s in zip(times, sizes):
                cum += s
                service_rows.append([sid, mode, t, cum])
    write_csv(out_dir / "arrival_curves.csv", ["station", "mode", "time_s", "cumulative"], arrival_rows)
    write_csv(out_dir / "service_curves.csv", ["station", "mode", "time_s", "cumulative"], service_rows)

    if trace_costs:
        cost_rows = []
        costs, probs = diag["costs"], diag["probs"]
        for i, g in enumerate(scenario.groups):
            for mode_idx, mode in enumerate(MODES):
                cost_rows.append([g.group_id, intervals[i], mode, costs[i, mode_idx], probs[i, mode_idx]])
        write_csv(out_dir / "costs.csv", ["group", "interval", "mode", "cost_eur", "probability"], cost_rows)


SWEEP_HEADER = [
    "k",
    "tau",
    "d_max",
    "xi",
    "travel_time_cost_eur",
    "emission_cost_eur",
    "fleet_cost_eur",
    "price_penalty_eur",
    "total_eur",
    "converged",
    "feasible",
    "price_eur",
    "charge_per_trip_eur",
    "car_share",
    "bus_share",
    "dras_share",
    "total_wait_pax_s",
    "person_travel_s",
    "vkt_m",
]


def sweep_rows(points: list) -> list:
    rows = []
    for pt in points:
        rows.append(
            [
                pt.policy.k,
                pt.policy.tau,
                pt.d_max,
                pt.policy.xi,
                pt.travel_time_cost,
                pt.emission_cost,
                pt.fleet_cost,
                pt.price_penalty,
                pt.total,
                pt.converged,
                pt.feasible,
                pt.price,
                pt.charge_per_trip,
                pt.shares["car"],
                pt.shares["bus"],
                pt.shares["dras"],
                pt.total_wait_pax_s,
                pt.person_travel_s,
                pt.vkt_m,
            ]
        )
    return rows


def write_sweep_outputs(out_dir: Path, grid_result: GridResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "sweep.csv", SWEEP_HEADER, sweep_rows(grid_result.points))
    opt = grid_result.optimum
    payload = {
        "optimum": None
        if opt is None
        else {
            "k": opt.policy.k,
            "tau": opt.policy.tau,
            "xi": opt.policy.xi,
            "d_max": opt.d_max,
            "total_eur": opt.total,
            "price_eur": opt.price,
            "converged": opt.converged,
        },
        "per_xi_optima": {
            str(xi): {"k": pt.policy.k, "tau": pt.policy.tau, "total_eur": pt.total}
            for xi, pt in sorted(grid_result.per_xi_optima.items())
        },
        "per_d_max_optima": {
            f"{dmax:.6f}": {"k": pt.policy.k, "tau": pt.policy.tau, "xi": pt.policy.xi, "total_eur": pt.total}
            for dmax, pt in sorted(grid_result.per_dmax_optima.items())
        },
    }
    write_json(out_dir / "optimum.json", payload)


COMPARE_HEADER = [
    "scenario",
    "dras",
    "tcs",
    "n_dras",
    "travel_time_h",
    "delta_travel_time_pct",
    "distance_km",
    "delta_distance_pct",
    "fleet_cost_eur_per_day",
    "credit_price_eur",
    "charge_per_trip_eur",
    "car_share",
    "bus_share",
    "dras_share",
    "total_wait_pax_s",
    "objective_eur",
    "converged",
]


def write_compare_outputs(out_dir: Path, table: list) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [[row[col] for col in COMPARE_HEADER] for row in table]
    write_csv(out_dir / "comparison.csv", COMPARE_HEADER, rows)
