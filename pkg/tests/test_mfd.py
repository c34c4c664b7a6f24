import numpy as np
import pytest

from tcsim.mfd import NetworkState, propagate_car_dynamics, service_travel_time, speed_of
from tcsim.scenario import scenario_from_dict


def corridor_doc(groups, n_max=100.0, intervals=8, interval_s=300):
    return {
        "grid": {"start_s": 0, "interval_s": interval_s, "intervals": intervals},
        "stations": [{"id": "a", "position_m": 0}, {"id": "b", "position_m": 30000}],
        "demand_groups": groups,
        "mode_params": {"n_max_veh": n_max},
    }


class TestSpeedOf:
    def test_free_flow(self):
        assert speed_of(0, 100, v_min_kmh=5, n_max_veh=5500) == 100

    def test_half_accumulation(self):
        assert speed_of(2750, 100, v_min_kmh=5, n_max_veh=5500) == 50

    def test_floor_binds_at_jam(self):
        assert speed_of(5500, 100, v_min_kmh=5, n_max_veh=5500) == 5

    def test_floor_binds_beyond_jam(self):
        assert speed_of(9000, 100, v_min_kmh=5, n_max_veh=5500) == 5

    def test_negative_accumulation_rejected(self):
        with pytest.raises(ValueError):
            speed_of(-1, 100, v_min_kmh=5, n_max_veh=5500)

    def test_vectorized(self):
        out = speed_of(np.array([0.0, 2750.0, 5500.0]), 100, v_min_kmh=5, n_max_veh=5500)
        np.testing.assert_allclose(out, [100, 50, 5])


class TestPropagate:
    def test_zero_share_free_flow(self):
        sc = scenario_from_dict(
            corridor_doc(
                [
                    {"id": "g0", "origin": "a", "destination": "b", "trip_length_m": 20000, "departure_s": 100, "demand": 40},
                    {"id": "g1", "origin": "a", "destination": "b", "trip_length_m": 12000, "departure_s": 700, "demand": 30},
                ]
            )
        )
        state, trips = propagate_car_dynamics(sc, np.zeros(2))
        assert np.all(state.accumulation == 0)
        assert np.all(state.speed_kmh == 100)
        # free-flow travel time is exactly length / v_max
        np.testing.assert_allclose(trips.travel_time_s, [20000 / (100 / 3.6), 12000 / (100 / 3.6)])

    def test_single_cohort_travel_time_matches_hand_recursion(self):
        # one cohort of 50 on n_max=100: speed while alone is 100*(1-0.5) = 50
        # km/h; a 14000 m trip at 50 km/h takes 1008 s (hand-stepped: the
        # cohort is the only accumulation until it exits)
        sc = scenario_from_dict(
            corridor_doc(
                [{"id": "g0", "origin": "a", "destination": "b", "trip_length_m": 14000, "departure_s": 0, "demand": 50}],
                n_max=100.0,
            )
        )
        state, trips = propagate_car_dynamics(sc, np.ones(1))
        v = speed_of(50, 100, v_min_kmh=5, n_max_veh=100.0)
        assert v == 50
        assert trips.travel_time_s[0] == pytest.approx(14000 / (v / 3.6), rel=1e-12)
        # clock advance per interval while the cohort circulates: v * dt
        np.testing.assert_allclose(np.diff(state.distance_clock_m[:3]), [v / 3.6 * 300] * 2)
        # exit happens at the first boundary with z - z_entry >= length
        b = trips.exit_boundary[0]
        assert state.distance_clock_m[b] >= 14000

    def test_entry_exit_accounting(self):
        sc = scenario_from_dict(
            corridor_doc(
                [
                    {"id": "g0", "origin": "a", "destination": "b", "trip_length_m": 5000, "departure_s": 10, "demand": 20},
                    {"id": "g1", "origin": "a", "destination": "b", "trip_length_m": 9000, "departure_s": 400, "demand": 10},
                ]
            )
        )
        state, trips = propagate_car_dynamics(sc, np.ones(2))
        assert state.q_in.sum() == pytest.approx(30)
        # conservation: everything that entered either left or is still in
        unfinished = (~trips.finished).sum()
        assert state.q_in.sum() == pytest.approx(state.q_out.sum() + unfinished)
        assert trips.finished.all()

    def test_congestion_peak_near_center_on_baseline_demand(self, single_od_scenario):
        sc = single_od_scenario
        state, trips = propagate_car_dynamics(sc, np.full(sc.n_groups, 0.8))
        m_peak = int(state.speed_kmh.argmin())
        t_peak = sc.grid.boundaries[m_peak]
        assert state.speed_kmh.min() <= 10.0  # speeds approach the floor
        assert 25200 <= t_peak <= 28800  # between 07:00 and 08:00
        assert len(state.overshoot_intervals) > 0  # oversaturated demand is flagged

    def test_monotone_in_shares(self):
        rng = np.random.default_rng(7)
        groups = [
            {
                "id": f"g{i}",
                "origin": "a",
                "destination": "b",
                "trip_length_m": float(rng.uniform(5000, 25000)),
                "departure_s": float(rng.uniform(0, 2399)),
                "demand": float(rng.uniform(5, 25)),
            }
            for i in range(12)
        ]
        sc = scenario_from_dict(corridor_doc(groups, n_max=150.0))
        x = rng.uniform(0.1, 0.7, 12)
        bump = x + rng.uniform(0.0, 0.29, 12)
        n_low = propagate_car_dynamics(sc, x)[0].accumulation
        n_high = propagate_car_dynamics(sc, bump)[0].accumulation
        assert np.all(n_high >= n_low - 1e-9)

    def test_virtual_traveler_consistency(self):
        rng = np.random.default_rng(21)
        groups = [
            {
                "id": f"g{i}",
                "origin": "a",
                "destination": "b",
                "trip_length_m": float(rng.uniform(3000, 20000)),
                "departure_s": float(rng.uniform(0, 2399)),
                "demand": float(rng.uniform(5, 20)),
            }
            for i in range(10)
        ]
        sc = scenario_from_dict(corridor_doc(groups, n_max=200.0))
        state, trips = propagate_car_dynamics(sc, rng.uniform(0.2, 1.0, 10))
        z = state.distance_clock_m
        dt = sc.grid.interval_s
        for i, g in enumerate(sc.groups):
            if trips.exit_boundary[i] < 0:
                continue
            e, b = trips.entry_boundary[i], trips.exit_boundary[i]
            covered = z[b] - z[e]
            assert covered >= g.trip_length_m - 1e-9
            v_last = state.speed_kmh[b - 1] / 3.6
            assert covered < g.trip_length_m + v_last * dt + 1e-9

    def test_unfinished_trips_flagged_and_clamped(self):
        sc = scenario_from_dict(
            corridor_doc(
                [{"id": "g0", "origin": "a", "destination": "b", "trip_length_m": 29000, "departure_s": 2300, "demand": 95}],
                n_max=100.0,
                intervals=8,
            )
        )
        state, trips = propagate_car_dynamics(sc, np.ones(1))
        assert not trips.finished[0]
        assert trips.travel_time_s[0] == pytest.approx(sc.grid.end_s - 2300)


class TestServiceTravelTime:
    def make_state(self, speeds, interval_s=300.0):
        speeds = np.asarray(speeds, dtype=float)
        M = len(speeds)
        b = np.arange(M + 1) * interval_s
        z = np.concatenate([[0.0], np.cumsum(speeds / 3.6 * interval_s)])
        return NetworkState(
            boundaries_s=b,
            accumulation=np.zeros(M),
            speed_kmh=speeds,
            distance_clock_m=z,
            q_in=np.zeros(M),
            q_out=np.zeros(M + 1),
        )

    def test_uniform_speed(self):
        state = self.make_state([60.0] * 8)
        assert service_travel_time(120, 20000, state, 90) == pytest.approx(1200, rel=1e-12)

    def test_partial_full_partial_decomposition(self):
        # depart 2 min into a 5-min grid, travel 20 min: the distance is
        # 3 min at V0, three full intervals, then 2 min at V4
        speeds = np.array([50.0, 40.0, 30.0, 45.0, 60.0, 70.0])
        state = self.make_state(speeds, interval_s=300.0)
        dist = (3 * 60 * speeds[0] + 300 * (speeds[1] + speeds[2] + speeds[3]) + 2 * 60 * speeds[4]) / 3.6
        assert service_travel_time(120, dist, state, 100) == pytest.approx(1200, rel=1e-12)

    def test_zero_distance(self):
        state = self.make_state([60.0] * 4)
        assert service_travel_time(100, 0, state, 90) == 0.0

    def test_mode_cap_applies_per_interval(self):
        # car speeds exceed the cap early, drop below it later: the capped
        # profile is min(V, cap) interval by interval
        state = self.make_state([100.0, 20.0])
        dist = (80.0 * 300 + 20.0 * 150) / 3.6  # full first interval at cap, half second
        assert service_travel_time(0, dist, state, 80) == pytest.approx(450, rel=1e-12)

    def test_extrapolates_past_horizon(self):
        state = self.make_state([50.0, 25.0])
        dist_inside = 2 * 300 * 25.0 / 3.6  # bus-capped: min(50,25)=25 both intervals
        t = service_travel_time(0, dist_inside * 2, state, 25)
        # second half continues at the final interval's speed
        assert t == pytest.approx(1200, rel=1e-12)

    def test_strictly_increasing_in_distance(self):
        state = self.make_state([80.0, 10.0, 45.0, 5.0, 60.0])
        dists = np.linspace(10, 40000, 60)
        times = [service_travel_time(130, d, state, 90) for d in dists]
        assert np.all(np.diff(times) > 0)

    def test_continuity_in_distance(self):
        state = self.make_state([80.0, 10.0, 45.0])
        base = 80.0 / 3.6 * 300  # distance at the first boundary
        eps = 1e-6
        t_lo = service_travel_time(0, base - eps, state, 90)
        t_hi = service_travel_time(0, base + eps, state, 90)
        assert abs(t_hi - t_lo) < 1e-3
