"""Equilibrium computation: VI residual assembly and projected gradient solve.

The unknown is one (car, bus, dras) share triple per demand group plus the
credit price, laid out flat as [x | y | z | p]. A solve minimizes the merit
0.5 * ||F||^2 by projected gradient steps with Armijo backtracking; service
timelines are frozen within each gradient evaluation and line search, and
re-propagated after every accepted step. The price block of F uses the
natural-map (projected) residual so the merit vanishes at slack-market
complementarity solutions, where the raw residual stays positive at p = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from tcsim.forward import ForwardModel, FrozenCurves
from tcsim.market import CreditMarketState, market_state
from tcsim.scenario import CorridorScenario, PolicyParams, SolverConfig


@dataclass
class DecisionVector:
    """Mode shares per demand group plus the credit price."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    price: float

    @classmethod
    def from_flat(cls, flat: np.ndarray) -> "DecisionVector":
        n = (len(flat) - 1) // 3
        return cls(
            x=flat[:n].copy(), y=flat[n : 2 * n].copy(), z=flat[2 * n : 3 * n].copy(), price=float(flat[3 * n])
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x, self.y, self.z, [self.price]])

    def share_sums(self) -> np.ndarray:
        return self.x + self.y + self.z


@dataclass
class TraceRow:
    iteration: int
    merit: float
    residual_norm: float
    step_size: float
    backtracks: int
    damped: bool = False


@dataclass
class EquilibriumResult:
    decision: DecisionVector
    residual_norm: float
    iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)


def project(flat: np.ndarray, price_cap: float, price_fixed: float | None = None) -> np.ndarray:
    """Elementwise projection onto K: shares into [0,1], price into [0, cap]."""
    out = np.clip(flat, 0.0, 1.0)
    if price_fixed is not None:
        out[-1] = price_fixed
    else:
        out[-1] = min(max(flat[-1], 0.0), price_cap)
    return out


def initial_decision(scenario: CorridorScenario, policy: PolicyParams, config: SolverConfig) -> DecisionVector:
    """Cold start: even split over the available modes, zero price."""
    from tcsim.scenario import BUS, DRAS

    n = scenario.n_groups
    avail = np.ones((n, 3), dtype=bool)
    for i, g in enumerate(scenario.groups):
        avail[i, 1] = scenario.mode_available(g, BUS)
        avail[i, 2] = scenario.mode_available(g, DRAS) and (not config.operations_enabled or policy.xi > 0)
    shares = avail / avail.sum(axis=1, keepdims=True)
    return DecisionVector(x=shares[:, 0], y=shares[:, 1], z=shares[:, 2], price=0.0)


def residual(
    decision: DecisionVector,
    scenario: CorridorScenario,
    policy: PolicyParams | None = None,
    config: SolverConfig | None = None,
) -> np.ndarray:
    """Full VI residual at a decision: propagates timelines, then evaluates F.

    Stacks shares minus logit probabilities with the (natural-map) market
    component; deterministic.
    """
    policy = policy if policy is not None else scenario.policy
    config = config if config is not None else scenario.solver
    model = ForwardModel(scenario, policy, config)
    lam = decision.flat()
    if config.operations_enabled:
        model.set_curves(model.propagate(lam))
    return model.evaluate(lam)["F"]


def _evaluate_full(model: ForwardModel, lam: np.ndarray) -> dict:
    """Evaluate with curves re-propagated from lam (consistent residual)."""
    if model.config.operations_enabled:
        model.set_curves(model.propagate(lam))
    return model.evaluate(lam)


def solve_equilibrium(
    scenario: CorridorScenario,
    policy: PolicyParams | None = None,
    init: DecisionVector | None = None,
    config: SolverConfig | None = None,
) -> EquilibriumResult:
    """Projected gradient with backtracking on the merit 0.5 * ||F||^2.

    Terminates on ||F|| <= eps_res (converged), on a merit change below
    eps_loss, or at max_iter; never raises on non-convergence (the best
    iterate is returned with ``converged=False``). Repeated residual
    increases across timeline re-propagations trigger a 0.5 share-averaging
    damping step. Converged slack markets with a tiny positive price are
    re-solved with the price pinned at zero so complementarity holds exactly.
    """
    policy = policy if policy is not None else scenario.policy
    config = config if config is not None else scenario.solver

    result = _solve_once(scenario, policy, config, init, price_fixed=None if policy.tcs_active else 0.0)

    if config.multistart_seeds:
        for seed in config.multistart_seeds:
            rng = np.random.default_rng(seed)
            n = scenario.n_groups
            raw = rng.uniform(0.0, 1.0, size=(n, 3))
            start = DecisionVector(raw[:, 0], raw[:, 1], raw[:, 2], price=0.0)
            alt = _solve_once(
                scenario, policy, config, start, price_fixed=None if policy.tcs_active else 0.0
            )
            if alt.residual_norm < result.residual_norm:
                result = alt

    # active-set refinement: certified slack market snaps the price to zero
    if (
        policy.tcs_active
        and 0.0 < result.decision.price < config.price_snap_tol
        and result.diagnostics.get("f_p_raw", 0.0) > config.price_snap_margin
    ):
        snapped = _solve_once(
            scenario,
            policy,
            config,
            replace(result.decision, price=0.0),
            price_fixed=0.0,
        )
        if snapped.converged or snapped.residual_norm <= result.residual_norm:
            snapped.diagnostics["price_snapped"] = True
            result = snapped
    return result


def _solve_once(
    scenario: CorridorScenario,
    policy: PolicyParams,
    config: SolverConfig,
    init: DecisionVector | None,
    price_fixed: float | None,
) -> EquilibriumResult:
    model = ForwardModel(scenario, policy, config)
    start = init if init is not None else initial_decision(scenario, policy, config)
    price_cap = scenario.params.price_cap_eur
    lam = project(start.flat(), price_cap, price_fixed)
    pin = price_fixed is not None

    out = _evaluate_full(model, lam)
    res_norm = float(np.linalg.norm(out["F"]))
    best_lam, best_norm, best_out = lam.copy(), res_norm, out

    trace: list = [TraceRow(0, 0.5 * res_norm**2, res_norm, 0.0, 0)]
    alpha = config.alpha0
    prev_norm = res_norm
    increase_streak = 0
    iterations = 0
    prev_merit_accepted = math.inf

    while res_norm > config.eps_res and iterations < config.max_iter:
        merit, _, grad = model.merit_and_grad(lam, pin_price=pin)
        grad_norm_sq = float(grad @ grad)
        if grad_norm_sq == 0.0:
            break

        accepted = None
        backtracks = 0
        step = alpha
        improved_step = None
        for bt in range(config.max_backtracks):
            cand = project(lam - step * grad, price_cap, price_fixed)
            merit_c = model.merit_only(cand)
            if merit_c <= merit - config.armijo_c * step * grad_norm_sq:
                accepted = cand
                backtracks = bt
                break
            if merit_c < merit and improved_step is None:
                improved_step = (cand, bt)
            step *= config.backtrack_beta

        if accepted is None:
            if improved_step is None:
                break  # line search exhausted with no descent: stalled
            accepted, backtracks = improved_step

        if backtracks == 0:
            alpha = min(step / config.backtrack_beta, config.alpha_max)
        else:
            alpha = step

        lam = accepted
        iterations += 1
        out = _evaluate_full(model, lam)
        res_norm = float(np.linalg.norm(out["F"]))
        merit_full = 0.5 * res_norm**2

        damped = False
        if res_norm > prev_norm + 1e-15:
            increase_streak += 1
            if increase_streak >= config.damping_patience:
                lam = project(0.5 * (lam + best_lam), price_cap, price_fixed)
                out = _evaluate_full(model, lam)
                res_norm = float(np.linalg.norm(out["F"]))
                merit_full = 0.5 * res_norm**2
                increase_streak = 0
                damped = True
        else:
            increase_streak = 0
        prev_norm = res_norm

        if res_norm < best_norm:
            best_lam, best_norm, best_out = lam.copy(), res_norm, out

        trace.append(TraceRow(iterations, merit_full, res_norm, step, backtracks, damped))

        if abs(prev_merit_accepted - merit_full) <= config.eps_loss:
            break
        prev_merit_accepted = merit_full

    decision = DecisionVector.from_flat(best_lam)
    best_out = _evaluate_full(model, best_lam)  # diagnostics at the best iterate's own curves
    diagnostics = _diagnostics(model, scenario, policy, config, best_lam, best_out)
    converged = best_norm <= config.eps_res and diagnostics["certified"]
    return EquilibriumResult(
        decision=decision,
        residual_norm=best_norm,
        iterations=iterations,
        converged=converged,
        diagnostics=diagnostics,
        trace=trace,
    )


def _diagnostics(
    model: ForwardModel,
    scenario: CorridorScenario,
    policy: PolicyParams,
    config: SolverConfig,
    lam: np.ndarray,
    out: dict,
) -> dict:
    decision = DecisionVector.from_flat(lam)
    market = market_state(decision.x, decision.price, policy, scenario)
    share_sum_err = float(np.abs(decision.share_sums() - 1.0).max()) if scenario.n_groups else 0.0
    res_norm = float(np.linalg.norm(out["F"]))
    certified = bool(
        share_sum_err <= config.eps_share_sum
        and market.complementarity_ok()
        and res_norm <= config.eps_res
    )
    q = scenario.group_demands()
    total_q = q.sum()
    agg = {
        "car": float((q * decision.x).sum() / total_q) if total_q > 0 else 0.0,
        "bus": float((q * decision.y).sum() / total_q) if total_q > 0 else 0.0,
        "dras": float((q * decision.z).sum() / total_q) if total_q > 0 else 0.0,
    }
    curves = model.curves
    return {
        "certified": certified,
        "share_sum_error": share_sum_err,
        "market": market,
        "f_p_raw": float(out["f_p_raw"]),
        "car_fraction": float(out["car_frac"]),
        "aggregate_shares": agg,
        "travel_times": out["travel_times"],
        "costs": out["costs"],
        "probs": out["probs"],
        "waits": out["waits"],
        "total_wait_pax_s": float(out["waits"].sum()),
        "accumulation": out["accumulation"],
        "speed_kmh": out["speed"],
        "distance_clock_m": out["clock"],
        "vkt_m": float((out["accumulation"] * out["speed"] / 3.6 * scenario.grid.interval_s).sum()),
        "person_travel_s": float(
            (
                q
                * (
                    decision.x * out["travel_times"][:, 0]
                    + decision.y * out["travel_times"][:, 1]
                    + decision.z * out["travel_times"][:, 2]
                )
            ).sum()
        ),
        "curves": curves,
        "operations_enabled": config.operations_enabled,
    }


def warm_start_chain(
    scenario: CorridorScenario,
    policies: list,
    config: SolverConfig | None = None,
) -> dict:
    """Solve a policy sequence, initializing each solve from the previous result.

    The list must begin with the no-DRAS / no-TCS baseline; results are keyed
    by the policy.
    """
    if not policies:
        return {}
    first = policies[0]
    if first.tcs_active or first.xi > 0:
        raise ValueError("warm-start chain must begin with the no-DRAS/no-TCS baseline")
    config = config if config is not None else scenario.solver
    results: dict = {}
    prev: EquilibriumResult | None = None
    for policy in policies:
        init = prev.decision if prev is not None else None
        res = solve_equilibrium(scenario, policy, init=init, config=config)
        results[policy] = res
        prev = res
    return results
