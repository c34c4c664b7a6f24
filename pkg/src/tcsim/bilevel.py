"""Upper-level policy optimization: grid search over (k, tau, xi) and comparisons.

Each candidate policy is evaluated by solving the lower-level equilibrium
(warm-started from the no-policy baseline) and pricing four objective
components: travel time, emissions (car vehicle-distance), amortized fleet
cost, and a soft credit-price penalty. The search enumerates the whole grid;
evaluations may run in a process pool and the outcome is identical to
sequential execution.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from tcsim.equilibrium import DecisionVector, EquilibriumResult, solve_equilibrium
from tcsim.scenario import (
    BilevelConfig,
    CorridorScenario,
    ObjectiveWeights,
    PolicyParams,
    SolverConfig,
)


@dataclass
class PolicyPoint:
    """One evaluated (k, tau, xi) with its equilibrium and objective breakdown."""

    policy: PolicyParams
    converged: bool
    feasible: bool
    price: float
    charge_per_trip: float
    shares: dict
    person_travel_s: float
    total_wait_pax_s: float
    vkt_m: float
    travel_time_cost: float
    emission_cost: float
    fleet_cost: float
    fleet_cost_per_day: float
    price_penalty: float
    total: float
    iterations: int
    residual_norm: float
    equilibrium: EquilibriumResult | None = None

    @property
    def d_max(self) -> float:
        return self.policy.d_max


@dataclass
class GridResult:
    points: list
    optimum: PolicyPoint | None
    per_xi_optima: dict = field(default_factory=dict)
    per_dmax_optima: dict = field(default_factory=dict)


def evaluate_policy(
    scenario: CorridorScenario,
    policy: PolicyParams,
    weights: ObjectiveWeights | None = None,
    warm_start: DecisionVector | None = None,
    config: SolverConfig | None = None,
    keep_equilibrium: bool = True,
) -> PolicyPoint:
    """Solve the lower level and price the planner objective.

    A budget violation is evaluated but flagged infeasible; lower-level
    non-convergence yields an infinite total with the diagnostics retained.
    """
    weights = weights if weights is not None else scenario.bilevel.weights
    config = config if config is not None else scenario.solver
    params = scenario.params
    result = solve_equilibrium(scenario, policy, init=warm_start, config=config)
    diag = result.diagnostics

    time_s = diag["person_travel_s"]
    if scenario.bilevel.include_waiting_in_objective:
        time_s += diag["total_wait_pax_s"]
    travel_time_cost = weights.travel_time * params.alpha_eur_per_s * time_s
    emission_cost = weights.emission * params.emission_cost_eur_per_m * diag["vkt_m"]
    fleet_cost = weights.fleet * policy.xi * params.dras_unit_cost_eur_per_day
    price_penalty = weights.credit_price * result.decision.price
    total = travel_time_cost + emission_cost + fleet_cost + price_penalty
    if not result.converged:
        total = math.inf

    return PolicyPoint(
        policy=policy,
        converged=result.converged,
        feasible=policy.xi * params.dras_unit_cost_eur_per_day <= params.budget_eur,
        price=result.decision.price,
        charge_per_trip=(policy.tau - policy.k) * result.decision.price,
        shares=dict(diag["aggregate_shares"]),
        person_travel_s=diag["person_travel_s"],
        total_wait_pax_s=diag["total_wait_pax_s"],
        vkt_m=diag["vkt_m"],
        travel_time_cost=travel_time_cost,
        emission_cost=emission_cost,
        fleet_cost=fleet_cost,
        fleet_cost_per_day=policy.xi * params.dras_unit_cost_eur_per_day,
        price_penalty=price_penalty,
        total=total,
        iterations=result.iterations,
        residual_norm=result.residual_norm,
        equilibrium=result if keep_equilibrium else None,
    )


def _evaluate_worker(args) -> tuple:
    scenario, policy, weights, config, warm = args
    point = evaluate_policy(
        scenario, policy, weights=weights, warm_start=warm, config=config, keep_equilibrium=False
    )
    return (policy.xi, policy.tau, policy.k), point


def grid_search(
    scenario: CorridorScenario,
    k_values=None,
    tau_values=None,
    xi_values=None,
    weights: ObjectiveWeights | None = None,
    config: SolverConfig | None = None,
    jobs: int = 1,
) -> GridResult:
    """Evaluate every (k, tau, xi) combination and rank the outcomes.

    Per fleet size, a DRAS-only anchor is solved first (warm-started from the
    global no-policy baseline) and every credit combination starts from that
    anchor, so results do not depend on evaluation order or worker count.
    """
    bl: BilevelConfig = scenario.bilevel
    k_values = list(k_values if k_values is not None else bl.k_values)
    tau_values = list(tau_values if tau_values is not None else bl.tau_values)
    xi_values = list(xi_values if xi_values is not None else bl.xi_values)
    if not k_values or not tau_values or not xi_values:
        raise ValueError("grid_search needs non-empty k, tau, and xi value lists")
    weights = weights if weights is not None else bl.weights
    config = config if config is not None else scenario.solver

    baseline = solve_equilibrium(scenario, PolicyParams(0, 0, 0), config=config)
    anchors: dict = {}
    for xi in sorted(set(xi_values)):
        anchor = solve_equilibrium(
            scenario, PolicyParams(0, 0, xi), init=baseline.decision, config=config
        )
        anchors[xi] = anchor.decision

    tasks = []
    for xi in xi_values:
        for tau in tau_values:
            for k in k_values:
                policy = PolicyParams(k=k, tau=tau, xi=xi)
                tasks.append((scenario, policy, weights, config, anchors[xi]))

    results: dict = {}
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, point in pool.map(_evaluate_worker, tasks):
                results[key] = point
    else:
        for task in tasks:
            key, point = _evaluate_worker(task)
            results[key] = point

    points = [results[(xi, tau, k)] for xi in xi_values for tau in tau_values for k in k_values]

    def rank_key(pt: PolicyPoint):
        return (pt.total, pt.policy.xi, pt.policy.tau, pt.policy.k)

    feasible = [pt for pt in points if pt.feasible]
    optimum = min(feasible, key=rank_key) if feasible else None
    per_xi = {}
    for pt in feasible:
        cur = per_xi.get(pt.policy.xi)
        if cur is None or rank_key(pt) < rank_key(cur):
            per_xi[pt.policy.xi] = pt
    per_dmax = {}
    for pt in feasible:
        key = round(pt.d_max, 6)
        cur = per_dmax.get(key)
        if cur is None or rank_key(pt) < rank_key(cur):
            per_dmax[key] = pt
    return GridResult(points=points, optimum=optimum, per_xi_optima=per_xi, per_dmax_optima=per_dmax)


QUADRANTS = ("no_policy", "dras_only", "tcs_only", "tcs_plus_dras")


def compare_policies(
    scenario: CorridorScenario,
    combined: PolicyParams | None = None,
    weights: ObjectiveWeights | None = None,
    config: SolverConfig | None = None,
) -> dict:
    """Evaluate the four policy quadrants and report deltas vs the baseline.

    ``combined`` defaults to the scenario's configured comparison point; the
    other quadrants are derived from it by dropping the TCS and/or the fleet.
    """
    bl = scenario.bilevel
    if combined is None:
        combined = PolicyParams(k=bl.compare_k, tau=bl.compare_tau, xi=bl.compare_xi)
    config = config if config is not None else scenario.solver

    quadrant_policies = {
        "no_policy": PolicyParams(0, 0, 0),
        "dras_only": PolicyParams(0, 0, combined.xi),
        "tcs_only": PolicyParams(combined.k, combined.tau, 0),
        "tcs_plus_dras": combined,
    }
    baseline_point = evaluate_policy(
        scenario, quadrant_policies["no_policy"], weights=weights, config=config
    )
    warm = baseline_point.equilibrium.decision if baseline_point.equilibrium else None
    rows = {"no_policy": baseline_point}
    for name in ("dras_only", "tcs_only", "tcs_plus_dras"):
        rows[name] = evaluate_policy(
            scenario, quadrant_policies[name], weights=weights, warm_start=warm, config=config
        )
    return rows


def comparison_table(rows: dict) -> list:
    """Flatten quadrant results into CSV-ready dict rows with baseline deltas."""
    base = rows["no_policy"]
    table = []
    for name in QUADRANTS:
        pt = rows[name]
        table.append(
            {
                "scenario": name,
                "dras": "yes" if pt.policy.xi > 0 else "no",
                "tcs": "yes" if pt.policy.tcs_active else "no",
                "n_dras": pt.policy.xi,
                "travel_time_h": pt.person_travel_s / 3600.0,
                "delta_travel_time_pct": 100.0 * (pt.person_travel_s / base.person_travel_s - 1.0)
                if base.person_travel_s
                else 0.0,
                "distance_km": pt.vkt_m / 1000.0,
                "delta_distance_pct": 100.0 * (pt.vkt_m / base.vkt_m - 1.0) if base.vkt_m else 0.0,
                "fleet_cost_eur_per_day": pt.fleet_cost_per_day,
                "credit_price_eur": pt.price,
                "charge_per_trip_eur": pt.charge_per_trip,
                "car_share": pt.shares["car"],
                "bus_share": pt.shares["bus"],
                "dras_share": pt.shares["dras"],
                "total_wait_pax_s": pt.total_wait_pax_s,
                "objective_eur": pt.total,
                "converged": pt.converged,
            }
        )
    return table
