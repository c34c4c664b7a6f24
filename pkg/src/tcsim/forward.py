"""Differentiable forward pass of the equilibrium map.

Re-implements the chronological car sweep, service travel times, waiting
areas, costs, and logit map as one torch float64 graph so the merit gradient
comes from automatic differentiation. Service-vehicle curves are FROZEN
inputs here: the event-driven timeline propagation happens outside the graph
and its jump times/sizes enter as constants, mirroring the outer
curve-update loop of the computation scheme. Discrete timing decisions (exit
boundaries, segment indices) are taken on detached values; mass and speed
magnitudes stay differentiable.

Numpy twins of every quantity live in mfd/queueing/choice and agreement is
pinned by tests; this module is the solver's single evaluation path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from tcsim import queueing
from tcsim.mfd import KMH_TO_MS, propagate_car_dynamics
from tcsim.queueing import ArrivalCurve, build_arrival_curve
from tcsim.scenario import BUS, CAR, DRAS, CorridorScenario, PolicyParams, SolverConfig
from tcsim.transit import propagate_bus_timelines, propagate_dras_timelines

DT = torch.float64


@dataclass
class FrozenCurves:
    """Service jumps per station and mode, plus propagation provenance."""

    bus_jumps: dict  # station_id -> (times array, sizes array)
    dras_jumps: dict
    bus_timelines: list = field(default_factory=list)
    dras_timelines: list = field(default_factory=list)
    arrival_curves: dict = field(default_factory=dict)  # (station_id, mode) -> ArrivalCurve

    @classmethod
    def empty(cls) -> "FrozenCurves":
        return cls(bus_jumps={}, dras_jumps={})


def propagate_service_curves(
    scenario: CorridorScenario, policy: PolicyParams, shares_y: np.ndarray, shares_z: np.ndarray, state
) -> FrozenCurves:
    """Build arrival curves from shares and run the timetable/event propagation."""
    arrivals: dict = {}
    for mode, shares in ((BUS, shares_y), (DRAS, shares_z)):
        for st in scenario.stations:
            arrivals[(st.station_id, mode)] = build_arrival_curve(st.station_id, mode, shares, scenario)
    bus_tl, bus_curves = propagate_bus_timelines(
        scenario, state, {sid: curve for (sid, mode), curve in arrivals.items() if mode == BUS}
    )
    dras_tl, dras_curves = propagate_dras_timelines(
        scenario, state, {sid: curve for (sid, mode), curve in arrivals.items() if mode == DRAS}, policy.xi
    )
    return FrozenCurves(
        bus_jumps={sid: (c.jump_times_s, c.jump_sizes) for sid, c in bus_curves.items()},
        dras_jumps={sid: (c.jump_times_s, c.jump_sizes) for sid, c in dras_curves.items()},
        bus_timelines=bus_tl,
        dras_timelines=dras_tl,
        arrival_curves=arrivals,
    )


class ForwardModel:
    """Torch graph for one (scenario, policy) pair with swappable frozen curves."""

    def __init__(self, scenario: CorridorScenario, policy: PolicyParams, config: SolverConfig):
        self.scenario = scenario
        self.policy = policy
        self.config = config
        p = scenario.params
        grid = scenario.grid
        self.M = grid.intervals
        self.N = scenario.n_groups
        self.S = len(scenario.stations)

        self.bounds = torch.tensor(grid.boundaries, dtype=DT)
        self.dt = grid.interval_s
        self.q = torch.tensor(scenario.group_demands(), dtype=DT)
        self.lengths = torch.tensor([g.trip_length_m for g in scenario.groups], dtype=DT)
        self.departures = torch.tensor([g.departure_s for g in scenario.groups], dtype=DT)
        self.entry = scenario.group_intervals()
        self.entry_t = torch.tensor(self.entry, dtype=torch.long)
        self.od_dist = torch.tensor([scenario.od_distance_m(g) for g in scenario.groups], dtype=DT)
        self.origin_idx = np.array([scenario.station_index(g.origin) for g in scenario.groups])
        self.origin_t = torch.tensor(self.origin_idx, dtype=torch.long)
        self.exog = torch.tensor(scenario.exogenous_profile(), dtype=DT)

        avail = np.ones((self.N, 3), dtype=bool)
        for i, g in enumerate(scenario.groups):
            avail[i, 1] = scenario.mode_available(g, BUS)
            avail[i, 2] = scenario.mode_available(g, DRAS)
        if config.operations_enabled and policy.xi <= 0:
            avail[:, 2] = False
        self.available = torch.tensor(avail)

        # overlap of interval k with [d_i, horizon): constant segment lengths
        # for the service travel-time integration
        b = grid.boundaries
        d = np.array([g.departure_s for g in scenario.groups])
        seg = np.clip(b[None, 1:] - np.maximum(d[:, None], b[None, :-1]), 0.0, grid.interval_s)
        self.seg = torch.tensor(seg, dtype=DT)

        self.v_caps = {BUS: p.v_max_bus_kmh, DRAS: p.v_max_dras_kmh}
        self.curves: FrozenCurves = FrozenCurves.empty()
        self._jump_tensors: dict = {}
        self.set_curves(FrozenCurves.empty())

    # -- frozen curve handling ----------------------------------------------

    def set_curves(self, curves: FrozenCurves) -> None:
        self.curves = curves
        self._jump_tensors = {}
        for mode, jumps in ((BUS, curves.bus_jumps), (DRAS, curves.dras_jumps)):
            max_j = max((len(t) for t, _ in jumps.values()), default=0)
            times = np.full((self.S, max(max_j, 1)), self.scenario.grid.end_s)
            sizes = np.zeros((self.S, max(max_j, 1)))
            for sid, (jt, jc) in jumps.items():
                s = self.scenario.station_index(sid)
                times[s, : len(jt)] = jt
                sizes[s, : len(jc)] = jc
            self._jump_tensors[mode] = (torch.tensor(times, dtype=DT), torch.tensor(sizes, dtype=DT))

    def propagate(self, lam: np.ndarray) -> FrozenCurves:
        """Re-run the event-driven service propagation at the given decision."""
        x, y, z, _ = self.unpack(lam)
        state, _ = propagate_car_dynamics(self.scenario, x)
        return propagate_service_curves(self.scenario, self.policy, y, z, state)

    # -- decision vector layout ---------------------------------------------

    def unpack(self, lam: np.ndarray):
        N = self.N
        return lam[:N], lam[N : 2 * N], lam[2 * N : 3 * N], float(lam[3 * N])

    # -- the graph ------------------------------------------------------------

    def compute(self, lam: torch.Tensor) -> dict:
        sc, p, policy = self.scenario, self.scenario.params, self.policy
        N, M = self.N, self.M
        x, y, z = lam[:N], lam[N : 2 * N], lam[2 * N : 3 * N]
        price = lam[3 * N]

        n, v, zc = self._car_sweep(x)
        t_car = self._car_travel_times(v, zc)
        t_bus = self._service_times(v, BUS)
        t_dras = self._service_times(v, DRAS)

        if self.config.operations_enabled:
            wait_bus = self._waits(y, BUS)
            wait_dras = self._waits(z, DRAS)
            paw_bus = p.eta_per_pax * wait_bus[self.origin_t, self.entry_t]
            paw_dras = p.eta_per_pax * wait_dras[self.origin_t, self.entry_t]
        else:
            wait_bus = torch.zeros((self.S, M), dtype=DT)
            wait_dras = torch.zeros((self.S, M), dtype=DT)
            paw_bus = torch.zeros(N, dtype=DT)
            paw_dras = torch.zeros(N, dtype=DT)

        alpha = p.alpha_eur_per_s
        alpha_w = p.alpha_wait_eur_per_s
        c_car = alpha * t_car + (policy.tau - policy.k) * price + p.delta_car_eur
        c_bus = alpha * t_bus + alpha_w * paw_bus - p.redemption_weight_bus * policy.k * price + p.delta_bus_eur
        c_dras = (
            alpha * t_dras + alpha_w * paw_dras - p.redemption_weight_dras * policy.k * price + p.delta_dras_eur
        )
        costs = torch.stack([c_car, c_bus, c_dras], dim=1)

        u = torch.where(self.available, -p.theta_per_eur * costs, torch.tensor(-torch.inf, dtype=DT))
        shift = u.max(dim=1, keepdim=True).values
        w = torch.exp(u - shift)
        probs = w / w.sum(dim=1, keepdim=True)

        total_q = self.q.sum()
        car_frac = (self.q * probs[:, 0]).sum() / total_q if float(total_q) > 0 else torch.tensor(0.0, dtype=DT)
        f_p_raw = policy.k - policy.tau * car_frac
        # natural-map residual: zero on the boundary p = 0 when the market is
        # slack, so the merit vanishes at complementarity solutions
        phi_p = price - torch.clamp(price - f_p_raw, min=0.0)

        f = torch.cat([x - probs[:, 0], y - probs[:, 1], z - probs[:, 2], phi_p.reshape(1)])
        merit = 0.5 * (f * f).sum()

        return {
            "merit": merit,
            "F": f,
            "probs": probs,
            "costs": costs,
            "travel_times": torch.stack([t_car, t_bus, t_dras], dim=1),
            "paw": torch.stack([paw_bus, paw_dras], dim=1),
            "waits": torch.stack([wait_bus, wait_dras], dim=2),  # (S, M, 2)
            "accumulation": n,
            "speed": v,
            "clock": zc,
            "f_p_raw": f_p_raw,
            "car_frac": car_frac,
        }

    def _car_sweep(self, x: torch.Tensor):
        p = self.scenario.params
        M, N = self.M, self.N
        qx = self.q * x
        q_in = torch.zeros(M, dtype=DT).index_add(0, self.entry_t, qx)

        lengths_f = self.lengths.detach().numpy()
        z_entry_f = np.zeros(N)
        entered = np.zeros(N, dtype=bool)
        exited = np.zeros(N, dtype=bool)

        n_prev = torch.zeros((), dtype=DT)
        z_cur = torch.zeros((), dtype=DT)
        z_f = 0.0
        n_list, v_list, z_list = [], [], [z_cur]
        for m in range(M):
            exit_mask = entered & ~exited & (z_f - z_entry_f >= lengths_f)
            if exit_mask.any():
                q_out_m = qx[torch.tensor(np.flatnonzero(exit_mask), dtype=torch.long)].sum()
                exited |= exit_mask
            else:
                q_out_m = torch.zeros((), dtype=DT)
            newly = self.entry == m
            if newly.any():
                entered |= newly
                z_entry_f[newly] = z_f
            n_m = torch.clamp(n_prev + q_in[m] - q_out_m, min=0.0)
            v_m = torch.clamp(
                p.v_max_car_kmh * (1.0 - (n_m + self.exog[m]) / p.n_max_veh),
                min=p.v_min_kmh,
                max=p.v_max_car_kmh,
            )
            z_cur = z_cur + v_m * KMH_TO_MS * self.dt
            z_f = float(z_cur)
            n_list.append(n_m)
            v_list.append(v_m)
            z_list.append(z_cur)
            n_prev = n_m
        return torch.stack(n_list), torch.stack(v_list), torch.stack(z_list)

    def _car_travel_times(self, v: torch.Tensor, zc: torch.Tensor) -> torch.Tensor:
        grid = self.scenario.grid
        v_entry = v[self.entry_t]
        t_entry = self.bounds[self.entry_t]
        z_dep = zc[self.entry_t] + (self.departures - t_entry) * v_entry * KMH_TO_MS
        target = z_dep + self.lengths

        z_np = zc.detach().numpy()
        target_np = target.detach().numpy()
        unfinished = target_np > z_np[-1] + 1e-9
        b = np.clip(np.searchsorted(z_np, target_np, side="left"), 1, self.M)
        b_t = torch.tensor(b, dtype=torch.long)
        v_seg = v[b_t - 1] * KMH_TO_MS
        t_exit = self.bounds[b_t - 1] + (target - zc[b_t - 1]) / v_seg
        t_trunc = torch.tensor(grid.end_s, dtype=DT) - self.departures
        return torch.where(torch.tensor(unfinished), t_trunc, t_exit - self.departures)

    def _service_times(self, v: torch.Tensor, mode: str) -> torch.Tensor:
        grid = self.scenario.grid
        v_mode = torch.minimum(v, torch.tensor(self.v_caps[mode], dtype=DT)) * KMH_TO_MS
        leg = self.seg * v_mode[None, :]
        cum = torch.cumsum(leg, dim=1)  # distance covered by end of interval k
        dist = self.od_dist

        cum_np = cum.detach().numpy()
        dist_np = dist.detach().numpy()
        beyond = cum_np[:, -1] < dist_np - 1e-12
        j = np.minimum((cum_np < dist_np[:, None]).sum(axis=1), self.M - 1)
        j_t = torch.tensor(j, dtype=torch.long)

        cum0 = torch.cat([torch.zeros((self.N, 1), dtype=DT), cum[:, :-1]], dim=1)
        covered_before = cum0.gather(1, j_t[:, None]).squeeze(1)
        v_j = v_mode[j_t]
        seg_start = torch.maximum(self.departures, self.bounds[j_t])
        t_reach = seg_start + (dist - covered_before) / v_j

        last_v = v_mode[-1]
        t_over = torch.tensor(grid.end_s, dtype=DT) + (dist - cum[:, -1]) / last_v
        t_end = torch.where(torch.tensor(beyond), t_over, t_reach)
        return t_end - self.departures

    def _arrival_cumulative(self, shares: torch.Tensor) -> torch.Tensor:
        """(S, M+1) cumulative arrivals per station from the mode's shares."""
        mass = self.q * shares
        flat = torch.zeros(self.S * self.M, dtype=DT)
        idx = torch.tensor(self.origin_idx * self.M + self.entry, dtype=torch.long)
        flat = flat.index_add(0, idx, mass)
        per_interval = flat.reshape(self.S, self.M)
        zero = torch.zeros((self.S, 1), dtype=DT)
        return torch.cat([zero, torch.cumsum(per_interval, dim=1)], dim=1)

    def _waits(self, shares: torch.Tensor, mode: str) -> torch.Tensor:
        """(S, M) waiting passenger-seconds by arrival cohort, frozen service."""
        a = self._arrival_cumulative(shares)
        jt, jc = self._jump_tensors[mode]
        s_cum = torch.cumsum(jc, dim=1)  # (S, J)
        s_prev = torch.cat([torch.zeros((self.S, 1), dtype=DT), s_cum[:, :-1]], dim=1)

        lo = a[:, :-1].unsqueeze(2)  # (S, M, 1)
        hi = a[:, 1:].unsqueeze(2)
        overlap = torch.clamp(
            torch.minimum(s_cum.unsqueeze(1), hi) - torch.maximum(s_prev.unsqueeze(1), lo), min=0.0
        )
        dep_integral = (jt.unsqueeze(1) * overlap).sum(dim=2)

        total_served = s_cum[:, -1].unsqueeze(1)
        horizon = self.scenario.grid.end_s
        unserved = torch.clamp(a[:, 1:] - torch.maximum(total_served, a[:, :-1]), min=0.0)
        dep_integral = dep_integral + horizon * unserved

        mid = 0.5 * (self.bounds[:-1] + self.bounds[1:])
        arr_integral = (a[:, 1:] - a[:, :-1]) * mid[None, :]
        return dep_integral - arr_integral

    # -- numpy-facing helpers -------------------------------------------------

    def merit_and_grad(self, lam: np.ndarray, pin_price: bool = False):
        t = torch.tensor(lam, dtype=DT, requires_grad=True)
        out = self.compute(t)
        (grad,) = torch.autograd.grad(out["merit"], t)
        g = grad.detach().numpy().copy()
        if pin_price:
            g[-1] = 0.0
        return float(out["merit"]), out["F"].detach().numpy().copy(), g

    def evaluate(self, lam: np.ndarray) -> dict:
        with torch.no_grad():
            out = self.compute(torch.tensor(lam, dtype=DT))
        return {k: (v.numpy().copy() if isinstance(v, torch.Tensor) else v) for k, v in out.items()}

    def merit_only(self, lam: np.ndarray) -> float:
        with torch.no_grad():
            return float(self.compute(torch.tensor(lam, dtype=DT))["merit"])
