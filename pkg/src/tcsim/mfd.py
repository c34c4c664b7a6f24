"""Trip-based MFD dynamics: car accumulation, speeds, and the distance clock.

Car cohorts enter the network in their departure interval and exit once the
cumulative-distance clock has advanced by their trip length since the start
boundary of that interval. Service vehicles (bus / DRAS) do not contribute to
accumulation; their travel times are evaluated on the same speed profile with
a per-interval mode cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tcsim.scenario import CorridorScenario

KMH_TO_MS = 1.0 / 3.6


def speed_of(n: float | np.ndarray, v_cap_kmh: float, *, v_min_kmh: float, n_max_veh: float):
    """Mean network speed (km/h) at accumulation ``n`` under a free-flow cap.

    Linear speed-MFD with a floor: max(v_min, v_cap * (1 - n/n_max)), capped
    at v_cap. Pure function, vectorizes over ``n``.
    """
    if np.any(np.asarray(n) < 0):
        raise ValueError("accumulation must be >= 0")
    v = v_cap_kmh * (1.0 - np.asarray(n, dtype=float) / n_max_veh)
    return np.minimum(np.maximum(v, v_min_kmh), v_cap_kmh)


@dataclass
class NetworkState:
    """Per-interval car accumulation and speed plus the boundary distance clock.

    ``accumulation[m]`` and ``speed_kmh[m]`` describe interval m (0-based,
    covering [t_m, t_{m+1})); ``distance_clock_m`` has M+1 boundary values with
    clock[0] = 0. ``q_in``/``q_out`` are the entry/exit masses; exits landing
    exactly on the horizon boundary are kept in the extra q_out slot M.
    """

    boundaries_s: np.ndarray
    accumulation: np.ndarray
    speed_kmh: np.ndarray
    distance_clock_m: np.ndarray
    q_in: np.ndarray
    q_out: np.ndarray
    overshoot_intervals: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    @property
    def intervals(self) -> int:
        return len(self.accumulation)

    def clock_at(self, t: float) -> float:
        """Distance clock at time t, linearly interpolated within intervals."""
        b = self.boundaries_s
        if t <= b[0]:
            return 0.0
        if t >= b[-1]:
            last_v = self.speed_kmh[-1] * KMH_TO_MS
            return float(self.distance_clock_m[-1] + (t - b[-1]) * last_v)
        m = min(int((t - b[0]) // (b[1] - b[0])), self.intervals - 1)
        v = self.speed_kmh[m] * KMH_TO_MS
        return float(self.distance_clock_m[m] + (t - b[m]) * v)


@dataclass
class CarTrips:
    """Per-group car trip outcomes from one propagation."""

    travel_time_s: np.ndarray
    entry_boundary: np.ndarray
    exit_boundary: np.ndarray  # -1 when unfinished at the horizon
    finished: np.ndarray


def propagate_car_dynamics(
    scenario: CorridorScenario, car_shares: np.ndarray
) -> tuple[NetworkState, CarTrips]:
    """Single chronological sweep of the accumulation dynamics.

    Within interval m: exits whose distance requirement is met by the clock at
    the interval's start boundary are removed, entries departing in the
    interval are added, and the interval speed is evaluated on the resulting
    accumulation (plus any exogenous through-traffic, which affects speed
    only).

    Travel times are recovered by inverting the piecewise-linear distance
    clock from each group's actual departure instant, so a free-flow trip
    takes exactly length/speed. Trips unfinished at the horizon are assigned
    the horizon end as exit time and flagged.
    """
    p = scenario.params
    grid = scenario.grid
    M = grid.intervals
    bounds = grid.boundaries
    dt = grid.interval_s
    shares = np.asarray(car_shares, dtype=float)
    if shares.shape != (scenario.n_groups,):
        raise ValueError(f"car_shares must have shape ({scenario.n_groups},)")
    if np.any((shares < -1e-12) | (shares > 1 + 1e-12)):
        raise ValueError("car shares must lie in [0, 1]")

    entry = scenario.group_intervals()
    q = scenario.group_demands() * shares
    lengths = np.array([g.trip_length_m for g in scenario.groups])
    exog = scenario.exogenous_profile()

    q_in = np.zeros(M)
    np.add.at(q_in, entry, q)

    n = np.zeros(M)
    v = np.zeros(M)
    z = np.zeros(M + 1)
    q_out = np.zeros(M + 1)
    exit_boundary = np.full(scenario.n_groups, -1, dtype=int)
    active = np.zeros(scenario.n_groups, dtype=bool)

    for m in range(M):
        exits = active & (z[m] - z[entry] >= lengths)
        if exits.any():
            q_out[m] = q[exits].sum()
            exit_boundary[exits] = m
            active &= ~exits
        active |= entry == m
        n[m] = (n[m - 1] if m > 0 else 0.0) + q_in[m] - q_out[m]
        n[m] = max(n[m], 0.0)  # guard float residue
        v[m] = speed_of(n[m] + exog[m], p.v_max_car_kmh, v_min_kmh=p.v_min_kmh, n_max_veh=p.n_max_veh)
        z[m + 1] = z[m] + v[m] * KMH_TO_MS * dt

    finished_at_end = active & (z[M] - z[entry] >= lengths)
    if finished_at_end.any():
        q_out[M] = q[finished_at_end].sum()
        exit_boundary[finished_at_end] = M

    state = NetworkState(
        boundaries_s=bounds,
        accumulation=n,
        speed_kmh=v,
        distance_clock_m=z,
        q_in=q_in,
        q_out=q_out,
        overshoot_intervals=np.flatnonzero(n > p.n_max_veh),
    )

    # continuous travel times from the clock, per group
    travel = np.zeros(scenario.n_groups)
    finished = np.zeros(scenario.n_groups, dtype=bool)
    for i, g in enumerate(scenario.groups):
        target = state.clock_at(g.departure_s) + lengths[i]
        if target > z[M] + 1e-9:
            travel[i] = grid.end_s - g.departure_s
        else:
            b = int(np.searchsorted(z, target, side="left"))
            b = max(b, 1)
            v_ms = v[b - 1] * KMH_TO_MS
            t_exit = bounds[b - 1] + (target - z[b - 1]) / v_ms
            travel[i] = t_exit - g.departure_s
            finished[i] = True

    trips = CarTrips(
        travel_time_s=travel,
        entry_boundary=entry,
        exit_boundary=exit_boundary,
        finished=finished,
    )
    return state, trips


def service_travel_time(
    depart_s: float, distance_m: float, state: NetworkState, v_cap_kmh: float
) -> float:
    """In-vehicle time (s) for a service vehicle on the shared speed profile.

    Integrates distance over the piecewise-constant speeds with the mode cap
    applied per interval (a capped vehicle in a jam moves at the jam speed):
    partial first interval, full middle intervals, partial last. Extrapolates
    at the final interval's speed if the horizon ends first.
    """
    if distance_m <= 0:
        return 0.0
    b = state.boundaries_s
    if not (b[0] <= depart_s <= b[-1]):
        raise ValueError(f"departure {depart_s} outside horizon [{b[0]}, {b[-1]}]")
    M = state.intervals
    dt = b[1] - b[0]
    remaining = float(distance_m)
    t = float(depart_s)
    m = min(int((t - b[0]) // dt), M - 1)
    while m < M:
        v_ms = min(state.speed_kmh[m], v_cap_kmh) * KMH_TO_MS
        seg = b[m + 1] - t
        if remaining <= v_ms * seg:
            return t + remaining / v_ms - depart_s
        remaining -= v_ms * seg
        t = float(b[m + 1])
        m += 1
    v_ms = min(state.speed_kmh[M - 1], v_cap_kmh) * KMH_TO_MS
    return t + remaining / v_ms - depart_s
