import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_waiting
from tcsim.queueing import (
    ArrivalCurve,
    ServiceCurve,
    build_arrival_curve,
    perceived_wait,
    waiting_area,
    waiting_by_interval,
)
from tcsim.scenario import scenario_from_dict


def make_arrival(per_interval, interval_s=100.0, start=0.0, station="s", mode="bus"):
    per_interval = np.asarray(per_interval, dtype=float)
    bounds = start + interval_s * np.arange(len(per_interval) + 1)
    return ArrivalCurve(station, mode, bounds, np.concatenate([[0.0], np.cumsum(per_interval)]))


def random_instance(rng, max_intervals=6):
    """Integer-valued arrivals and a feasible integer service schedule."""
    M = rng.integers(2, max_intervals + 1)
    arrivals = rng.integers(0, 30, size=M).astype(float)
    curve = make_arrival(arrivals)
    horizon = curve.boundaries_s[-1]
    jumps = []
    served = 0.0
    for t in np.sort(rng.uniform(0, horizon, size=rng.integers(1, 8))):
        queue = curve.value_at(t) - served
        if queue < 1:
            continue
        size = float(rng.integers(1, int(queue) + 1))
        jumps.append((float(t), size))
        served += size
    times = np.array([t for t, _ in jumps])
    sizes = np.array([s for _, s in jumps])
    return curve, ServiceCurve("s", "bus", times, sizes)


class TestArrivalCurve:
    def test_zero_share(self):
        doc = {
            "grid": {"start_s": 0, "interval_s": 300, "intervals": 3},
            "stations": [{"id": "a", "position_m": 0}, {"id": "b", "position_m": 5000}],
            "demand_groups": [
                {"id": "g0", "origin": "a", "destination": "b", "departure_s": 10, "demand": 100}
            ],
            "mode_params": {},
        }
        sc = scenario_from_dict(doc)
        curve = build_arrival_curve("a", "bus", np.zeros(1), sc)
        assert curve.total == 0

    def test_linear_rise(self):
        doc = {
            "grid": {"start_s": 0, "interval_s": 300, "intervals": 1},
            "stations": [{"id": "a", "position_m": 0}, {"id": "b", "position_m": 5000}],
            "demand_groups": [
                {"id": "g0", "origin": "a", "destination": "b", "departure_s": 10, "demand": 100}
            ],
            "mode_params": {},
        }
        sc = scenario_from_dict(doc)
        curve = build_arrival_curve("a", "bus", np.array([0.5]), sc)
        assert curve.total == 50
        assert curve.value_at(150) == pytest.approx(25)

    def test_slopes_add_across_groups(self):
        doc = {
            "grid": {"start_s": 0, "interval_s": 300, "intervals": 1},
            "stations": [{"id": "a", "position_m": 0}, {"id": "b", "position_m": 5000}],
            "demand_groups": [
                {"id": "g0", "origin": "a", "destination": "b", "departure_s": 10, "demand": 60},
                {"id": "g1", "origin": "a", "destination": "b", "departure_s": 20, "demand": 40},
            ],
            "mode_params": {},
        }
        sc = scenario_from_dict(doc)
        curve = build_arrival_curve("a", "bus", np.array([0.5, 0.25]), sc)
        assert curve.total == pytest.approx(40)

    def test_time_to_reach_inverts(self):
        curve = make_arrival([10, 0, 20])
        assert curve.time_to_reach(5) == pytest.approx(50)
        assert curve.time_to_reach(10) == pytest.approx(100)
        assert curve.time_to_reach(15) == pytest.approx(225)
        assert curve.time_to_reach(31) == np.inf


class TestWaitingArea:
    def test_single_departure_serving_linear_arrivals(self):
        # 10 passengers over 100 s, all served at t=100: area is
        # 10*100 minus the area under the arrival ramp
        curve = make_arrival([10.0])
        service = ServiceCurve("s", "bus", np.array([100.0]), np.array([10.0]))
        w = waiting_area(curve, service, 0)
        assert w == pytest.approx(500.0, rel=1e-12)
        oracle = brute_force_waiting(curve, service, n_quanta=10)
        assert w == pytest.approx(oracle[0], rel=1e-12)

    def test_immediate_fine_grained_service_gives_zero(self):
        # a service curve tracking arrivals with per-passenger jumps: waits
        # shrink to the sub-passenger rounding level
        curve = make_arrival([20.0])
        times = np.array([curve.time_to_reach(i + 1.0) for i in range(20)])
        service = ServiceCurve("s", "bus", times, np.ones(20))
        w = waiting_area(curve, service, 0)
        assert 0 <= w <= 20 * 5.0  # each unit waits at most its own 5 s window

    def test_single_atom_passenger(self):
        # one passenger in a narrow interval centered at t=50, served at t=80
        bounds = 0.5 + np.arange(101)
        cum = np.concatenate([[0.0], np.zeros(49), [1.0], np.ones(50)])
        curve = ArrivalCurve("s", "bus", bounds, np.cumsum(np.concatenate([[0.0], np.diff(cum)])) )
        service = ServiceCurve("s", "bus", np.array([80.0]), np.array([1.0]))
        w = waiting_by_interval(curve, service)
        assert w.sum() == pytest.approx(30.0, rel=1e-12)
        assert w[49] == pytest.approx(30.0, rel=1e-12)

    def test_unserved_passengers_wait_to_horizon(self):
        curve = make_arrival([10.0, 0.0])
        service = ServiceCurve.empty("s", "bus")
        w = waiting_by_interval(curve, service)
        # all 10 wait from arrival (mean t=50) to the horizon end t=200
        assert w[0] == pytest.approx(10 * 150.0, rel=1e-12)
        assert w[1] == 0.0

    def test_service_above_arrival_rejected(self):
        curve = make_arrival([5.0])
        service = ServiceCurve("s", "bus", np.array([10.0]), np.array([5.0]))
        with pytest.raises(ValueError, match="exceeds"):
            waiting_area(curve, service, 0)

    def test_oracle_equivalence_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            curve, service = random_instance(rng)
            total = curve.total
            if total == 0:
                continue
            exact = waiting_by_interval(curve, service)
            approx = brute_force_waiting(curve, service, n_quanta=int(total))
            np.testing.assert_allclose(exact, approx, rtol=1e-9, atol=1e-9)

    def test_partition_additivity(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            curve, service = random_instance(rng)
            per_interval = waiting_by_interval(curve, service)
            total_area = _area_between(curve, service)
            assert per_interval.sum() == pytest.approx(total_area, rel=1e-9, abs=1e-9)

    def test_more_service_never_increases_waiting(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            curve, service = random_instance(rng)
            if curve.total - service.total < 1:
                continue
            # add one more jump at a random time serving part of the backlog
            t_new = float(rng.uniform(0, curve.boundaries_s[-1]))
            queue_at = curve.value_at(t_new) - service.value_at(t_new)
            if queue_at < 1:
                continue
            times = np.concatenate([service.jump_times_s, [t_new]])
            sizes = np.concatenate([service.jump_sizes, [min(queue_at, 1.0)]])
            order = np.argsort(times, kind="stable")
            bigger = ServiceCurve("s", "bus", times[order], sizes[order])
            w0 = waiting_by_interval(curve, service)
            w1 = waiting_by_interval(curve, bigger)
            assert np.all(w1 <= w0 + 1e-9)


def _area_between(arrival, service):
    """Time-space area between the curves up to the horizon (exact)."""
    b = arrival.boundaries_s
    area_a = 0.0
    for m in range(len(b) - 1):
        area_a += 0.5 * (arrival.cumulative[m] + arrival.cumulative[m + 1]) * (b[m + 1] - b[m])
    area_s = 0.0
    times = np.concatenate([service.jump_times_s, [b[-1]]])
    cum = np.concatenate([[0.0], service.cumulative])
    for j in range(len(times) - 1):
        area_s += cum[j + 1] * (times[j + 1] - times[j])
    return area_a - area_s


class TestPerceivedWait:
    def test_identity_weight(self):
        assert perceived_wait(300.0, 25.0, 1.0) == 300.0

    def test_single_passenger_perceives_own_wait(self):
        w = 73.5
        assert perceived_wait(w, 1.0, 1.0) == pytest.approx(w)

    def test_zero_wait(self):
        assert perceived_wait(0.0, 10.0, 1.0) == 0.0

    def test_zero_arrivals(self):
        assert perceived_wait(0.0, 0.0, 2.0) == 0.0

    @given(
        w=st.floats(0, 1e6, allow_nan=False),
        arrivals=st.floats(0.1, 1e4),
        eta=st.floats(1e-3, 10.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_equals_average_times_weighted_cohort(self, w, arrivals, eta):
        # PAW = AW * eta * cohort reduces to eta * W
        aw = w / arrivals
        assert perceived_wait(w, arrivals, eta) == pytest.approx(aw * eta * arrivals, rel=1e-12)

    def test_linear_in_w(self):
        assert perceived_wait(600.0, 5.0, 0.3) == pytest.approx(2 * perceived_wait(300.0, 5.0, 0.3))
