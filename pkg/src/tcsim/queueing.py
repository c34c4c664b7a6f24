"""Station point queues: cumulative arrival curves and waiting-time areas.

Passengers arrive uniformly within each interval, giving a piecewise-linear
cumulative arrival curve; service curves are step functions jumping at vehicle
departures. Waiting is the area between the two curves in passenger index,
computed in closed form (no numeric quadrature). FIFO discipline is assumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tcsim.scenario import CAR, CorridorScenario


@dataclass(frozen=True)
class ArrivalCurve:
    """Piecewise-linear cumulative passenger arrivals A(t) at one station/mode.

    ``cumulative[m]`` is A at grid boundary m (M+1 values, A(t_0) = 0,
    non-decreasing); within an interval the curve is linear.
    """

    station_id: str
    mode: str
    boundaries_s: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self):
        c = self.cumulative
        if len(c) != len(self.boundaries_s):
            raise ValueError("cumulative must have one value per boundary")
        if c[0] != 0.0:
            raise ValueError("arrival curve must start at 0")
        if np.any(np.diff(c) < -1e-9):
            raise ValueError("arrival curve must be non-decreasing")

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])

    def value_at(self, t: float) -> float:
        b = self.boundaries_s
        if t <= b[0]:
            return 0.0
        if t >= b[-1]:
            return self.total
        m = min(int((t - b[0]) // (b[1] - b[0])), len(b) - 2)
        frac = (t - b[m]) / (b[m + 1] - b[m])
        return float(self.cumulative[m] + frac * (self.cumulative[m + 1] - self.cumulative[m]))

    def time_to_reach(self, level: float) -> float:
        """Earliest time at which A(t) >= level; inf if never within the horizon."""
        if level <= 0:
            return float(self.boundaries_s[0])
        c = self.cumulative
        if level > self.total + 1e-12:
            return float("inf")
        m = int(np.searchsorted(c, level, side="left"))
        m = max(m, 1)
        rise = c[m] - c[m - 1]
        if rise <= 0:
            return float(self.boundaries_s[m])
        frac = (level - c[m - 1]) / rise
        b = self.boundaries_s
        return float(b[m - 1] + frac * (b[m] - b[m - 1]))


@dataclass(frozen=True)
class ServiceCurve:
    """Step cumulative served-passenger curve: flat between departures, jumps at them."""

    station_id: str
    mode: str
    jump_times_s: np.ndarray
    jump_sizes: np.ndarray

    def __post_init__(self):
        t, s = self.jump_times_s, self.jump_sizes
        if len(t) != len(s):
            raise ValueError("jump times and sizes must align")
        if np.any(np.diff(t) < 0):
            raise ValueError("jump times must be sorted")
        if np.any(s < 0):
            raise ValueError("jump sizes must be >= 0")

    @classmethod
    def empty(cls, station_id: str, mode: str) -> "ServiceCurve":
        return cls(station_id, mode, np.array([]), np.array([]))

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.jump_sizes)

    @property
    def total(self) -> float:
        return float(self.jump_sizes.sum())

    def value_at(self, t: float) -> float:
        """Served count at time t (jumps included at their instant)."""
        idx = int(np.searchsorted(self.jump_times_s, t, side="right"))
        return float(self.jump_sizes[:idx].sum())


def build_arrival_curve(
    station_id: str, mode: str, shares: np.ndarray, scenario: CorridorScenario
) -> ArrivalCurve:
    """Cumulative arrivals at a station for one mode given that mode's shares.

    The slope on interval m is the summed demand of groups departing from the
    station in m times their mode share, divided by the interval length; the
    representation is exact piecewise-linear (no resampling).
    """
    if mode == CAR:
        raise ValueError("arrival curves exist for service modes only")
    shares = np.asarray(shares, dtype=float)
    M = scenario.grid.intervals
    per_interval = np.zeros(M)
    intervals = scenario.group_intervals()
    for i, g in enumerate(scenario.groups):
        if g.origin == station_id:
            per_interval[intervals[i]] += g.demand * shares[i]
    cumulative = np.concatenate([[0.0], np.cumsum(per_interval)])
    return ArrivalCurve(station_id, mode, scenario.grid.boundaries, cumulative)


def waiting_area(arrival: ArrivalCurve, service: ServiceCurve, m: int) -> float:
    """Total waiting (passenger-seconds) of passengers arriving in interval m.

    Integrates departure-time minus arrival-time over the passenger-index
    range of the interval's cohort, using the piecewise-linear inverse of the
    arrival curve and the step inverse of the service curve. Passengers
    unserved by the horizon end contribute (t_end - t_arrival).
    """
    b = arrival.boundaries_s
    horizon_end = float(b[-1])
    a_lo = float(arrival.cumulative[m])
    a_hi = float(arrival.cumulative[m + 1])
    cohort = a_hi - a_lo
    if cohort <= 0:
        return 0.0

    _check_service_below_arrival(arrival, service)

    times = service.jump_times_s
    cum = service.cumulative
    dep_integral = 0.0
    prev = 0.0
    for t_j, s_j in zip(times, cum):
        overlap = min(s_j, a_hi) - max(prev, a_lo)
        if overlap > 0:
            dep_integral += t_j * overlap
        prev = s_j
    unserved = a_hi - max(prev, a_lo)
    if unserved > 0:
        dep_integral += horizon_end * unserved

    # cohort arrivals are uniform over the interval, so their mean arrival
    # time is the interval midpoint
    arr_integral = cohort * 0.5 * (b[m] + b[m + 1])
    return dep_integral - arr_integral


def waiting_by_interval(arrival: ArrivalCurve, service: ServiceCurve) -> np.ndarray:
    """waiting_area for every interval of the grid."""
    M = len(arrival.boundaries_s) - 1
    return np.array([waiting_area(arrival, service, m) for m in range(M)])


def perceived_wait(waiting_pax_s: float, arrivals_in_interval: float, eta: float) -> float:
    """Perceived waiting: the crowding-weighted form reduces to eta * W.

    The weight scales the average wait by eta times the cohort size, which
    cancels the cohort denominator; zero arrivals perceive zero wait.
    """
    if arrivals_in_interval < 0:
        raise ValueError("arrivals must be >= 0")
    if arrivals_in_interval == 0:
        return 0.0
    return eta * waiting_pax_s


def _check_service_below_arrival(arrival: ArrivalCurve, service: ServiceCurve, tol: float = 1e-6) -> None:
    cum = 0.0
    for t_j, s_j in zip(service.jump_times_s, service.jump_sizes):
        cum += s_j
        if cum > arrival.value_at(t_j) + tol:
            raise ValueError(
                f"service exceeds arrivals at {arrival.station_id}/{arrival.mode} "
                f"(t={t_j}: served {cum} > arrived {arrival.value_at(t_j)})"
            )
