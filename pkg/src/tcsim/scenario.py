"""Scenario definition: time grid, stations, demand, mode and policy parameters.

Everything here is exogenous input. A scenario is immutable after loading and
safe to share read-only across concurrent policy evaluations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

CAR = "car"
BUS = "bus"
DRAS = "dras"
MODES = (CAR, BUS, DRAS)
SERVICE_MODES = (BUS, DRAS)


class ScenarioError(ValueError):
    """Scenario parse or invariant violation, reported with a field path."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


def _require(cond: bool, field_path: str, message: str) -> None:
    if not cond:
        raise ScenarioError(field_path, message)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretization of the study horizon.

    Boundaries are ``start_s + m * interval_s`` for m = 0..M. Interval ``m``
    (0-based) covers ``[boundary[m], boundary[m+1])``.
    """

    start_s: float
    interval_s: float
    intervals: int

    def __post_init__(self):
        _require(self.interval_s > 0, "grid.interval_s", "must be > 0")
        _require(self.intervals >= 1, "grid.intervals", "must be >= 1")

    @property
    def end_s(self) -> float:
        return self.start_s + self.interval_s * self.intervals

    @property
    def boundaries(self) -> np.ndarray:
        return self.start_s + self.interval_s * np.arange(self.intervals + 1)

    def interval_of(self, t: float) -> int:
        """0-based index of the interval containing t, with t in [start, end)."""
        _require(
            self.start_s <= t < self.end_s,
            "departure_s",
            f"time {t} outside horizon [{self.start_s}, {self.end_s})",
        )
        return min(int((t - self.start_s) // self.interval_s), self.intervals - 1)


@dataclass(frozen=True)
class Station:
    station_id: str
    position_m: float
    served_by: frozenset = frozenset(SERVICE_MODES)

    def __post_init__(self):
        _require(self.position_m >= 0, f"stations[{self.station_id}].position_m", "must be >= 0")
        unknown = set(self.served_by) - set(SERVICE_MODES)
        _require(not unknown, f"stations[{self.station_id}].served_by", f"unknown modes {sorted(unknown)}")


@dataclass(frozen=True)
class DemandGroup:
    """One non-atomic traveler cohort: an OD pair with a scheduled departure.

    Each group maps to exactly one interval of the grid via its departure time.
    """

    group_id: str
    origin: str
    destination: str
    trip_length_m: float
    departure_s: float
    demand: float

    def __post_init__(self):
        _require(self.trip_length_m > 0, f"demand_groups[{self.group_id}].trip_length_m", "must be > 0")
        _require(self.demand >= 0, f"demand_groups[{self.group_id}].demand", "must be >= 0")
        _require(self.origin != self.destination, f"demand_groups[{self.group_id}]", "origin == destination")


@dataclass(frozen=True)
class ModeParams:
    """Fixed model parameters for all three modes and service operations.

    Speeds are km/h, values of time EUR/h (converted to EUR/s internally),
    theta 1/EUR. ``delta_*`` absorb fares and fixed mode preferences and
    ``eta`` is the perceived-wait weight; the source study does not report
    numeric values for them, so they are calibration inputs.
    """

    v_max_car_kmh: float = 100.0
    v_max_bus_kmh: float = 90.0
    v_max_dras_kmh: float = 80.0
    v_min_kmh: float = 5.0
    n_max_veh: float = 5500.0
    alpha_eur_per_h: float = 10.5
    alpha_wait_eur_per_h: float = 26.5
    theta_per_eur: float = 0.1
    delta_car_eur: float = 0.0
    delta_bus_eur: float = 0.0
    delta_dras_eur: float = 0.0
    eta_per_pax: float = 1.0
    bus_capacity: int = 60
    bus_interval_s: float = 600.0
    bus_first_departure_s: float | None = None
    bus_dwell_s: float = 0.0
    dras_capacity: int = 20
    dras_occupancy_threshold: float = 0.8
    dras_min_headway_s: float = 60.0
    dras_launch_gap_s: float = 240.0
    dras_seat_accounting: str = "remaining"
    emission_cost_eur_per_m: float = 0.000012
    dras_unit_cost_eur_per_day: float = 274.0
    budget_eur: float = 5480.0
    redemption_weight_bus: float = 1.0
    redemption_weight_dras: float = 1.0
    price_cap_eur: float = 10.0

    def __post_init__(self):
        p = "mode_params"
        _require(self.v_min_kmh > 0, f"{p}.v_min_kmh", "must be > 0")
        _require(
            self.v_min_kmh < self.v_max_dras_kmh <= self.v_max_bus_kmh <= self.v_max_car_kmh,
            f"{p}.v_max_*",
            "need v_min < v_max_dras <= v_max_bus <= v_max_car",
        )
        _require(self.n_max_veh > 0, f"{p}.n_max_veh", "must be > 0")
        _require(self.theta_per_eur > 0, f"{p}.theta_per_eur", "must be > 0")
        _require(0 < self.dras_occupancy_threshold <= 1, f"{p}.dras_occupancy_threshold", "must be in (0, 1]")
        _require(self.eta_per_pax > 0, f"{p}.eta_per_pax", "must be > 0")
        _require(self.bus_capacity >= 1, f"{p}.bus_capacity", "must be >= 1")
        _require(self.dras_capacity >= 1, f"{p}.dras_capacity", "must be >= 1")
        _require(self.bus_interval_s > 0, f"{p}.bus_interval_s", "must be > 0")
        _require(self.dras_min_headway_s >= 0, f"{p}.dras_min_headway_s", "must be >= 0")
        _require(self.dras_launch_gap_s >= 0, f"{p}.dras_launch_gap_s", "must be >= 0")
        _require(
            self.dras_seat_accounting in ("remaining", "gross"),
            f"{p}.dras_seat_accounting",
            "must be 'remaining' or 'gross'",
        )

    @property
    def alpha_eur_per_s(self) -> float:
        return self.alpha_eur_per_h / 3600.0

    @property
    def alpha_wait_eur_per_s(self) -> float:
        return self.alpha_wait_eur_per_h / 3600.0

    def v_cap_kmh(self, mode: str) -> float:
        return {CAR: self.v_max_car_kmh, BUS: self.v_max_bus_kmh, DRAS: self.v_max_dras_kmh}[mode]

    def delta_eur(self, mode: str) -> float:
        return {CAR: self.delta_car_eur, BUS: self.delta_bus_eur, DRAS: self.delta_dras_eur}[mode]


@dataclass(frozen=True)
class PolicyParams:
    """Credit scheme (k credits allocated, tau charged per car trip) and DRAS fleet size."""

    k: int = 0
    tau: int = 0
    xi: int = 0

    def __post_init__(self):
        _require(self.k >= 0, "policy.k", "must be >= 0")
        _require(self.tau >= 0, "policy.tau", "must be >= 0")
        _require(self.xi >= 0, "policy.xi", "must be >= 0")
        if self.tcs_active:
            _require(self.k >= 1, "policy.k", "must be >= 1 when TCS is active")
            _require(self.tau >= self.k, "policy.tau", f"must be >= k (got tau={self.tau} < k={self.k})")

    @property
    def tcs_active(self) -> bool:
        return self.k > 0 or self.tau > 0

    @property
    def d_max(self) -> float:
        """Maximum feasible car fraction k/tau; 1.0 when the TCS is off."""
        return self.k / self.tau if self.tau > 0 else 1.0


@dataclass(frozen=True)
class SolverConfig:
    """Projected-gradient solver settings (see paper-independent defaults in README)."""

    eps_res: float = 1e-5
    eps_loss: float = 1e-18
    eps_share_sum: float = 1e-4
    max_iter: int = 2000
    armijo_c: float = 1e-4
    backtrack_beta: float = 0.9
    alpha0: float = 0.1
    alpha_max: float = 10.0
    max_backtracks: int = 40
    price_snap_tol: float = 1e-4
    price_snap_margin: float = 1e-3
    damping_patience: int = 4
    operations_enabled: bool = True
    multistart_seeds: tuple = ()

    def __post_init__(self):
        _require(0 < self.armijo_c < 1, "solver.armijo_c", "must be in (0, 1)")
        _require(0 < self.backtrack_beta < 1, "solver.backtrack_beta", "must be in (0, 1)")
        _require(self.alpha0 > 0, "solver.alpha0", "must be > 0")
        _require(self.max_iter >= 1, "solver.max_iter", "must be >= 1")


@dataclass(frozen=True)
class ObjectiveWeights:
    travel_time: float = 1.0
    emission: float = 1.0
    fleet: float = 0.5
    credit_price: float = 0.05

    def __post_init__(self):
        for name in ("travel_time", "emission", "fleet", "credit_price"):
            _require(getattr(self, name) >= 0, f"bilevel.weights.{name}", "must be >= 0")


@dataclass(frozen=True)
class BilevelConfig:
    k_values: tuple = ()
    tau_values: tuple = ()
    xi_values: tuple = ()
    weights: ObjectiveWeights = ObjectiveWeights()
    compare_k: int = 0
    compare_tau: int = 0
    compare_xi: int = 0
    include_waiting_in_objective: bool = False


@dataclass(frozen=True)
class CorridorScenario:
    """The full input world: grid, stations, demand groups, parameters.

    ``groups`` are ordered; the decision vector of the equilibrium solver has
    one (x, y, z) share triple per group in this order, plus the credit price.
    """

    grid: TimeGrid
    stations: tuple
    groups: tuple
    params: ModeParams
    policy: PolicyParams = PolicyParams()
    solver: SolverConfig = SolverConfig()
    bilevel: BilevelConfig = BilevelConfig()
    exogenous_accumulation: tuple = ()
    name: str = "scenario"

    def __post_init__(self):
        ids = [s.station_id for s in self.stations]
        _require(len(ids) == len(set(ids)), "stations", "duplicate station ids")
        positions = [s.position_m for s in self.stations]
        _require(
            all(b > a for a, b in zip(positions, positions[1:])),
            "stations",
            "positions must be strictly increasing along the corridor",
        )
        by_id = {s.station_id: s for s in self.stations}
        gids = [g.group_id for g in self.groups]
        _require(len(gids) == len(set(gids)), "demand_groups", "duplicate group ids")
        for g in self.groups:
            for end, label in ((g.origin, "origin"), (g.destination, "destination")):
                _require(
                    end in by_id,
                    f"demand_groups[{g.group_id}].{label}",
                    f"unknown station reference '{end}'",
                )
            self.grid.interval_of(g.departure_s)
        if self.exogenous_accumulation:
            _require(
                len(self.exogenous_accumulation) == self.grid.intervals,
                "exogenous_accumulation",
                f"must have {self.grid.intervals} entries",
            )
            _require(
                all(v >= 0 for v in self.exogenous_accumulation),
                "exogenous_accumulation",
                "entries must be >= 0",
            )

    # -- derived lookups ---------------------------------------------------

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def station(self, station_id: str) -> Station:
        return next(s for s in self.stations if s.station_id == station_id)

    def station_index(self, station_id: str) -> int:
        return next(i for i, s in enumerate(self.stations) if s.station_id == station_id)

    def group_intervals(self) -> np.ndarray:
        """Departure interval index (0-based) per group."""
        return np.array([self.grid.interval_of(g.departure_s) for g in self.groups], dtype=int)

    def group_demands(self) -> np.ndarray:
        return np.array([g.demand for g in self.groups], dtype=float)

    def od_distance_m(self, group: DemandGroup) -> float:
        return abs(self.station(group.destination).position_m - self.station(group.origin).position_m)

    def mode_route(self, mode: str) -> tuple:
        """Stations visited by the mode, in corridor order."""
        return tuple(s for s in self.stations if mode in s.served_by)

    def mode_available(self, group: DemandGroup, mode: str) -> bool:
        """Whether a service mode can carry the group (car is always available).

        Requires both endpoints on the mode's route and a forward trip; the
        DRAS additionally needs a positive fleet (checked by the caller since
        fleet size is a policy variable).
        """
        if mode == CAR:
            return True
        o, d = self.station(group.origin), self.station(group.destination)
        return mode in o.served_by and mode in d.served_by and o.position_m < d.position_m

    def exogenous_profile(self) -> np.ndarray:
        if self.exogenous_accumulation:
            return np.asarray(self.exogenous_accumulation, dtype=float)
        return np.zeros(self.grid.intervals)

    def with_policy(self, policy: PolicyParams) -> "CorridorScenario":
        return replace(self, policy=policy)

    def total_demand(self) -> float:
        return float(sum(g.demand for g in self.groups))


def discretize_demand(total: float, peak_center_s: float, spread_s: float, grid: TimeGrid) -> np.ndarray:
    """Split a normally distributed departure profile into per-interval demands.

    Uses the normal CDF over interval boundaries (no sampling), clipping the
    mass outside the horizon onto the boundary intervals so the result sums to
    ``total`` exactly.
    """
    _require(total >= 0, "demand_profiles.total", "must be >= 0")
    _require(spread_s > 0, "demand_profiles.spread_s", "must be > 0")
    bounds = grid.boundaries
    cdf = np.array([0.5 * (1.0 + math.erf((b - peak_center_s) / (spread_s * math.sqrt(2.0)))) for b in bounds])
    mass = np.diff(cdf)
    mass[0] += cdf[0]
    mass[-1] += 1.0 - cdf[-1]
    return total * mass


# -- JSON loading ----------------------------------------------------------


def _schema() -> dict:
    with resources.files("tcsim.data").joinpath("scenario.schema.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


def _validate_structure(doc: dict, source: str) -> None:
    import jsonschema

    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ScenarioError(f"{source}:{path}", err.message)


def _profile_groups(profile: dict, scenario_stations: dict, grid: TimeGrid) -> list:
    origin, destination = profile["origin"], profile["destination"]
    for end in (origin, destination):
        _require(end in scenario_stations, "demand_profiles", f"unknown station reference '{end}'")
    length = profile.get(
        "trip_length_m",
        abs(scenario_stations[destination].position_m - scenario_stations[origin].position_m),
    )
    per_interval = discretize_demand(profile["total"], profile["peak_center_s"], profile["spread_s"], grid)
    bounds = grid.boundaries
    groups = []
    for m, q in enumerate(per_interval):
        groups.append(
            DemandGroup(
                group_id=f"{origin}-{destination}-m{m:02d}",
                origin=origin,
                destination=destination,
                trip_length_m=length,
                # midpoint: first-order conditional mean of the departure
                # distribution within the interval
                departure_s=0.5 * (bounds[m] + bounds[m + 1]),
                demand=float(q),
            )
        )
    return groups


def scenario_from_dict(doc: dict, source: str = "<dict>") -> CorridorScenario:
    _validate_structure(doc, source)
    grid = TimeGrid(
        start_s=float(doc["grid"]["start_s"]),
        interval_s=float(doc["grid"]["interval_s"]),
        intervals=int(doc["grid"]["intervals"]),
    )
    stations = tuple(
        Station(
            station_id=s["id"],
            position_m=float(s["position_m"]),
            served_by=frozenset(s.get("served_by", list(SERVICE_MODES))),
        )
        for s in doc["stations"]
    )
    by_id = {s.station_id: s for s in stations}
    positions = [s.position_m for s in stations]
    _require(
        all(b > a for a, b in zip(positions, positions[1:])),
        "stations",
        "positions must be strictly increasing along the corridor",
    )

    groups: list = []
    for idx, g in enumerate(doc.get("demand_groups", [])):
        origin, destination = g["origin"], g["destination"]
        for end, label in ((origin, "origin"), (destination, "destination")):
            _require(
                end in by_id,
                f"demand_groups[{idx}].{label}",
                f"unknown station reference '{end}'",
            )
        default_len = abs(by_id[destination].position_m - by_id[origin].position_m)
        groups.append(
            DemandGroup(
                group_id=g.get("id", f"{origin}-{destination}-{len(groups)}"),
                origin=origin,
                destination=destination,
                trip_length_m=float(g.get("trip_length_m", default_len)),
                departure_s=float(g["departure_s"]),
                demand=float(g["demand"]),
            )
        )
    for profile in doc.get("demand_profiles", []):
        groups.extend(_profile_groups(profile, by_id, grid))

    params = ModeParams(**doc.get("mode_params", {}))
    policy = PolicyParams(**doc.get("policy", {}))
    solver_kwargs = dict(doc.get("solver", {}))
    if "multistart_seeds" in solver_kwargs:
        solver_kwargs["multistart_seeds"] = tuple(solver_kwargs["multistart_seeds"])
    solver = SolverConfig(**solver_kwargs)

    bl = doc.get("bilevel", {})
    compare = bl.get("compare", {})
    bilevel = BilevelConfig(
        k_values=tuple(bl.get("k_values", [])),
        tau_values=tuple(bl.get("tau_values", [])),
        xi_values=tuple(bl.get("xi_values", [])),
        weights=ObjectiveWeights(**bl.get("weights", {})),
        compare_k=int(compare.get("k", 0)),
        compare_tau=int(compare.get("tau", 0)),
        compare_xi=int(compare.get("xi", 0)),
        include_waiting_in_objective=bool(bl.get("include_waiting_in_objective", False)),
    )

    return CorridorScenario(
        grid=grid,
        stations=stations,
        groups=tuple(groups),
        params=params,
        policy=policy,
        solver=solver,
        bilevel=bilevel,
        exogenous_accumulation=tuple(doc.get("exogenous_accumulation", [])),
        name=doc.get("name", Path(source).stem if source != "<dict>" else "scenario"),
    )


def load_scenario(path: str | Path) -> CorridorScenario:
    """Load and validate a scenario JSON file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(str(path), "scenario file not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"invalid JSON: {exc}") from exc
    return scenario_from_dict(doc, source=str(path))


def load_bundled(name: str) -> CorridorScenario:
    """Load one of the scenarios shipped with the package (by file stem)."""
    ref = resources.files("tcsim.data").joinpath(f"{name}.json")
    with ref.open("r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return scenario_from_dict(doc, source=name)


def scenario_to_dict(sc: CorridorScenario) -> dict:
    """Serialize to the scenario JSON format (groups explicit, profiles expanded)."""
    return {
        "name": sc.name,
        "grid": {"start_s": sc.grid.start_s, "interval_s": sc.grid.interval_s, "intervals": sc.grid.intervals},
        "stations": [
            {"id": s.station_id, "position_m": s.position_m, "served_by": sorted(s.served_by)}
            for s in sc.stations
        ],
        "demand_groups": [
            {
                "id": g.group_id,
                "origin": g.origin,
                "destination": g.destination,
                "trip_length_m": g.trip_length_m,
                "departure_s": g.departure_s,
                "demand": g.demand,
            }
            for g in sc.groups
        ],
        "mode_params": {
            k: v for k, v in sc.params.__dict__.items() if v is not None
        },
        "policy": {"k": sc.policy.k, "tau": sc.policy.tau, "xi": sc.policy.xi},
        "solver": {
            **{k: v for k, v in sc.solver.__dict__.items() if k != "multistart_seeds"},
            "multistart_seeds": list(sc.solver.multistart_seeds),
        },
        "bilevel": {
            "k_values": list(sc.bilevel.k_values),
            "tau_values": list(sc.bilevel.tau_values),
            "xi_values": list(sc.bilevel.xi_values),
            "weights": {
                "travel_time": sc.bilevel.weights.travel_time,
                "emission": sc.bilevel.weights.emission,
                "fleet": sc.bilevel.weights.fleet,
                "credit_price": sc.bilevel.weights.credit_price,
            },
            "compare": {"k": sc.bilevel.compare_k, "tau": sc.bilevel.compare_tau, "xi": sc.bilevel.compare_xi},
            "include_waiting_in_objective": sc.bilevel.include_waiting_in_objective,
        },
        "exogenous_accumulation": list(sc.exogenous_accumulation),
    }


def save_scenario(sc: CorridorScenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n", encoding="utf-8")
