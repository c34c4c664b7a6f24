"""Continuous-time bus and DRAS operations along the corridor.

Buses follow a fixed timetable from the first bus station and board
min(waiting, remaining seats) at every stop. DRAS vehicles shuttle
origin -> ... -> last station -> origin repeatedly; at each boarding stop a
vehicle departs once the waiting queue reaches the occupancy threshold,
subject to a minimum headway between consecutive boarding departures at the
same station. Propagation is event-chronological and deterministic (ties
broken by vehicle id, then station order).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from tcsim.mfd import NetworkState, service_travel_time
from tcsim.queueing import ArrivalCurve, ServiceCurve
from tcsim.scenario import BUS, DRAS, CorridorScenario


@dataclass
class Visit:
    station_id: str
    visit_index: int
    t_arr_s: float
    t_dep_s: float | None  # None: vehicle still waiting at the horizon end
    boarded: float


@dataclass
class VehicleTimeline:
    vehicle_id: str
    mode: str
    visits: list = field(default_factory=list)

    def validate(self) -> None:
        times = []
        for v in self.visits:
            times.append(v.t_arr_s)
            if v.t_dep_s is not None:
                if v.t_dep_s < v.t_arr_s:
                    raise ValueError(f"{self.vehicle_id}: departure before arrival at {v.station_id}")
                times.append(v.t_dep_s)
        arrs = [v.t_arr_s for v in self.visits]
        if any(b <= a for a, b in zip(arrs, arrs[1:])):
            raise ValueError(f"{self.vehicle_id}: visit arrivals not strictly increasing")


def _route(scenario: CorridorScenario, mode: str):
    return scenario.mode_route(mode)


def _curves_from_jumps(route, mode: str, jumps: dict) -> dict:
    curves = {}
    for st in route:
        recorded = sorted(jumps.get(st.station_id, []))
        times = np.array([t for t, _ in recorded])
        sizes = np.array([c for _, c in recorded])
        curves[st.station_id] = ServiceCurve(st.station_id, mode, times, sizes)
    return curves


def propagate_bus_timelines(
    scenario: CorridorScenario,
    state: NetworkState,
    arrival_curves: dict,
) -> tuple[list, dict]:
    """Run the fixed-schedule buses and build per-station service curves.

    One vehicle spawns per scheduled origin departure, regardless of demand.
    Boarding happens at the departure instant of each stop except the last
    (the terminal only alights); later buses see the queue left by earlier
    ones. Returns (timelines, {station_id: ServiceCurve}).
    """
    p = scenario.params
    grid = scenario.grid
    route = _route(scenario, BUS)
    if len(route) < 2:
        return [], _curves_from_jumps(route, BUS, {})

    first_dep = p.bus_first_departure_s if p.bus_first_departure_s is not None else grid.start_s
    schedule = []
    t = first_dep
    while t <= grid.end_s + 1e-9:
        if t >= grid.start_s:
            schedule.append(t)
        t += p.bus_interval_s

    # trajectories are independent of boarding (fixed dwell), so lay them out
    # first and process boarding chronologically afterwards
    timelines = []
    boarding_events = []  # (t_board, spawn_idx, station_order, vehicle, visit)
    for j, t0 in enumerate(schedule):
        veh = VehicleTimeline(vehicle_id=f"bus-{j:03d}", mode=BUS)
        t_arr = t0
        for s_idx, st in enumerate(route):
            t_dep = t_arr if s_idx == 0 else t_arr + p.bus_dwell_s
            visit = Visit(st.station_id, 1, t_arr, t_dep, 0.0)
            veh.visits.append(visit)
            if s_idx < len(route) - 1:
                if t_dep <= grid.end_s:
                    boarding_events.append((t_dep, j, s_idx, veh, visit))
                dist = route[s_idx + 1].position_m - st.position_m
                t_arr = t_dep + service_travel_time(min(t_dep, grid.end_s), dist, state, p.v_max_bus_kmh)
        timelines.append(veh)

    served: dict = {st.station_id: 0.0 for st in route}
    onboard = {veh.vehicle_id: 0.0 for veh in timelines}
    jumps: dict = {st.station_id: [] for st in route}
    for t_board, _, _, veh, visit in sorted(boarding_events, key=lambda e: (e[0], e[1], e[2])):
        curve = arrival_curves[visit.station_id]
        queue = max(curve.value_at(t_board) - served[visit.station_id], 0.0)
        seats = max(p.bus_capacity - onboard[veh.vehicle_id], 0.0)
        boarded = min(queue, seats)
        visit.boarded = boarded
        served[visit.station_id] += boarded
        onboard[veh.vehicle_id] += boarded
        jumps[visit.station_id].append((t_board, boarded))

    return timelines, _curves_from_jumps(route, BUS, jumps)


def propagate_dras_timelines(
    scenario: CorridorScenario,
    state: NetworkState,
    arrival_curves: dict,
    fleet_size: int,
) -> tuple[list, dict]:
    """Event-chronological propagation of the demand-responsive shuttles.

    Vehicles launch from the route origin staggered by the configured gap and
    loop until their next arrival would exceed the horizon. At a boarding
    stop the head of the station's vehicle queue departs at the earliest
    instant when unserved arrivals reach the occupancy threshold, delayed if
    needed to keep the minimum headway since the previous boarding departure
    there; the service curve then jumps by exactly the threshold amount.
    Vehicles that cannot reach the threshold before the horizon stay put and
    are recorded with an open visit.

    With ``dras_seat_accounting='remaining'`` the threshold at intermediate
    stops is taken on the seats left (onboard load rides to the terminal);
    ``'gross'`` applies the literal full-capacity threshold unconditionally.
    """
    p = scenario.params
    grid = scenario.grid
    route = _route(scenario, DRAS)
    jumps: dict = {st.station_id: [] for st in route}
    if fleet_size <= 0 or len(route) < 2:
        return [], _curves_from_jumps(route, DRAS, jumps)

    horizon = grid.end_s
    last_idx = len(route) - 1
    positions = [st.position_m for st in route]
    timelines = [VehicleTimeline(vehicle_id=f"dras-{j:03d}", mode=DRAS) for j in range(fleet_size)]
    onboard = [0.0] * fleet_size
    visit_counts: list = [dict() for _ in range(fleet_size)]
    served = {st.station_id: 0.0 for st in route}
    last_jump = {st.station_id: -math.inf for st in route}
    blocked = {st.station_id: False for st in route}

    events: list = []  # (time, vehicle_idx, station_idx): arrival events
    for j in range(fleet_size):
        t_launch = grid.start_s + j * p.dras_launch_gap_s
        if t_launch <= horizon:
            heapq.heappush(events, (t_launch, j, 0))

    def record_visit(j: int, s_idx: int, t_arr: float, t_dep: float | None, boarded: float) -> None:
        sid = route[s_idx].station_id
        count = visit_counts[j].get(sid, 0) + 1
        visit_counts[j][sid] = count
        timelines[j].visits.append(Visit(sid, count, t_arr, t_dep, boarded))

    def schedule_arrival(j: int, from_idx: int, to_idx: int, depart: float) -> None:
        dist = abs(positions[to_idx] - positions[from_idx])
        t_arr = depart + service_travel_time(min(depart, horizon), dist, state, p.v_max_dras_kmh)
        if t_arr <= horizon:
            heapq.heappush(events, (t_arr, j, to_idx))

    # Arrivals resolve immediately: the served count and last-jump time carry
    # all state a later departure at the station depends on, and arrival order
    # (the heap order) is the boarding order.
    while events:
        t_arr, j, s_idx = heapq.heappop(events)
        sid = route[s_idx].station_id
        if s_idx == last_idx:
            onboard[j] = 0.0
            record_visit(j, s_idx, t_arr, t_arr, 0.0)
            schedule_arrival(j, last_idx, 0, t_arr)
            continue
        if blocked[sid]:
            record_visit(j, s_idx, t_arr, None, 0.0)
            continue
        if p.dras_seat_accounting == "remaining":
            threshold = p.dras_occupancy_threshold * (p.dras_capacity - onboard[j])
        else:
            threshold = p.dras_occupancy_threshold * p.dras_capacity
        curve: ArrivalCurve = arrival_curves[sid]
        t_cross = curve.time_to_reach(served[sid] + threshold)
        t_dep = max(t_arr, t_cross, last_jump[sid] + p.dras_min_headway_s)
        if not math.isfinite(t_dep) or t_dep > horizon:
            blocked[sid] = True
            record_visit(j, s_idx, t_arr, None, 0.0)
            continue
        record_visit(j, s_idx, t_arr, t_dep, threshold)
        served[sid] += threshold
        last_jump[sid] = t_dep
        jumps[sid].append((t_dep, threshold))
        onboard[j] += threshold
        schedule_arrival(j, s_idx, s_idx + 1, t_dep)

    return timelines, _curves_from_jumps(route, DRAS, jumps)


def check_operational_invariants(
    scenario: CorridorScenario,
    bus_timelines: list,
    bus_curves: dict,
    dras_timelines: list,
    dras_curves: dict,
    arrival_curves: dict,
) -> list:
    """Hard capacity/headway checks; returns a list of violation messages."""
    p = scenario.params
    problems = []
    for veh in bus_timelines:
        for v in veh.visits:
            if v.boarded > p.bus_capacity + 1e-9:
                problems.append(f"{veh.vehicle_id} boarded {v.boarded} > bus capacity at {v.station_id}")
    cap = p.dras_occupancy_threshold * p.dras_capacity
    for veh in dras_timelines:
        for v in veh.visits:
            if v.boarded > cap + 1e-9:
                problems.append(f"{veh.vehicle_id} boarded {v.boarded} > threshold capacity at {v.station_id}")
    for sid, curve in dras_curves.items():
        gaps = np.diff(curve.jump_times_s)
        if np.any(gaps < p.dras_min_headway_s - 1e-9):
            problems.append(f"DRAS departures at {sid} violate the minimum headway")
    for mode, curves in ((BUS, bus_curves), (DRAS, dras_curves)):
        for sid, curve in curves.items():
            arr = arrival_curves.get((sid, mode))
            if arr is None:
                continue
            cum = 0.0
            for t_j, s_j in zip(curve.jump_times_s, curve.jump_sizes):
                cum += s_j
                if cum > arr.value_at(t_j) + 1e-6:
                    problems.append(f"{mode} service exceeds arrivals at {sid} (t={t_j})")
    return problems
