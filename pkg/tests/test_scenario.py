import json
import math

import numpy as np
import pytest

from tcsim.scenario import (
    CorridorScenario,
    DemandGroup,
    ModeParams,
    PolicyParams,
    ScenarioError,
    Station,
    TimeGrid,
    discretize_demand,
    load_bundled,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)


def minimal_doc(**overrides):
    doc = {
        "grid": {"start_s": 0, "interval_s": 300, "intervals": 4},
        "stations": [
            {"id": "a", "position_m": 0},
            {"id": "b", "position_m": 8000},
        ],
        "demand_groups": [
            {"id": "g0", "origin": "a", "destination": "b", "departure_s": 100, "demand": 50}
        ],
        "mode_params": {"n_max_veh": 100.0},
    }
    doc.update(overrides)
    return doc


class TestTimeGrid:
    def test_boundaries(self):
        grid = TimeGrid(start_s=21600, interval_s=300, intervals=36)
        b = grid.boundaries
        assert len(b) == 37
        assert b[0] == 21600 and b[-1] == 32400
        assert np.all(np.diff(b) > 0)

    def test_interval_of(self):
        grid = TimeGrid(start_s=0, interval_s=300, intervals=4)
        assert grid.interval_of(0) == 0
        assert grid.interval_of(299.9) == 0
        assert grid.interval_of(300) == 1
        with pytest.raises(ScenarioError):
            grid.interval_of(1200)

    def test_invalid(self):
        with pytest.raises(ScenarioError):
            TimeGrid(start_s=0, interval_s=0, intervals=4)
        with pytest.raises(ScenarioError):
            TimeGrid(start_s=0, interval_s=300, intervals=0)


class TestValidation:
    def test_a10_scenario_loads(self, multi_od_scenario):
        sc = multi_od_scenario
        assert [s.position_m for s in sc.stations] == [0, 12000, 28000]
        od_pairs = {(g.origin, g.destination) for g in sc.groups}
        assert od_pairs == {
            ("longvilliers", "massy"),
            ("briis", "massy"),
            ("longvilliers", "briis"),
        }

    def test_empty_demand_is_valid(self):
        sc = scenario_from_dict(minimal_doc(demand_groups=[]))
        assert sc.n_groups == 0
        assert sc.total_demand() == 0

    def test_tau_below_k_rejected(self):
        with pytest.raises(ScenarioError, match="policy.tau"):
            scenario_from_dict(minimal_doc(policy={"k": 5, "tau": 4, "xi": 0}))

    def test_unknown_station_reference(self):
        doc = minimal_doc()
        doc["demand_groups"][0]["destination"] = "nowhere"
        with pytest.raises(ScenarioError, match="unknown station"):
            scenario_from_dict(doc)

    def test_station_order_enforced(self):
        doc = minimal_doc()
        doc["stations"] = [{"id": "a", "position_m": 100}, {"id": "b", "position_m": 100}]
        with pytest.raises(ScenarioError, match="strictly increasing"):
            scenario_from_dict(doc)

    def test_departure_outside_horizon(self):
        doc = minimal_doc()
        doc["demand_groups"][0]["departure_s"] = 5000
        with pytest.raises(ScenarioError):
            scenario_from_dict(doc)

    def test_schema_rejects_unknown_keys(self):
        with pytest.raises(ScenarioError):
            scenario_from_dict(minimal_doc(bogus_section={}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError, match="not found"):
            load_scenario(tmp_path / "nope.json")

    def test_speed_ordering_enforced(self):
        with pytest.raises(ScenarioError, match="v_max"):
            ModeParams(v_max_dras_kmh=95.0, v_max_bus_kmh=90.0)

    def test_exogenous_profile_length(self):
        with pytest.raises(ScenarioError, match="exogenous"):
            scenario_from_dict(minimal_doc(exogenous_accumulation=[1.0, 2.0]))


class TestPolicy:
    def test_no_tcs_encoding(self):
        p = PolicyParams(0, 0, 3)
        assert not p.tcs_active
        assert p.d_max == 1.0

    def test_d_max(self):
        assert PolicyParams(50, 72, 0).d_max == pytest.approx(0.6944, abs=1e-4)

    def test_incentive_condition(self):
        with pytest.raises(ScenarioError):
            PolicyParams(5, 4, 0)
        with pytest.raises(ScenarioError):
            PolicyParams(0, 4, 0)  # d_max would be 0


class TestDiscretizeDemand:
    def test_sums_to_total_with_peak(self, single_od_scenario):
        grid = single_od_scenario.grid
        d = discretize_demand(15000, 27000, 1800, grid)
        assert len(d) == 36
        assert d.sum() == pytest.approx(15000, rel=1e-9)
        # 07:30 falls in interval 18; the CDF mass peaks beside the center
        assert abs(int(d.argmax()) - grid.interval_of(27000)) <= 1
        assert np.all(d >= 0)

    def test_zero_total(self, single_od_scenario):
        d = discretize_demand(0, 27000, 1800, single_od_scenario.grid)
        assert np.all(d == 0)

    def test_symmetric_about_center(self):
        grid = TimeGrid(start_s=0, interval_s=100, intervals=10)
        d = discretize_demand(1000, 500, 120, grid)
        assert d.sum() == pytest.approx(1000, rel=1e-9)
        np.testing.assert_allclose(d, d[::-1], rtol=1e-12)

    def test_offcenter_mass_clipped_to_boundary(self):
        grid = TimeGrid(start_s=0, interval_s=100, intervals=4)
        d = discretize_demand(100, -500, 50, grid)
        assert d.sum() == pytest.approx(100, rel=1e-9)
        assert d[0] > 99  # nearly everything lands in the first interval

    def test_profile_atoms_match_function(self, single_od_scenario):
        sc = single_od_scenario
        expected = discretize_demand(15000, 27000, 1800, sc.grid)
        np.testing.assert_allclose(sc.group_demands(), expected, rtol=1e-12)
        assert sc.group_intervals().tolist() == list(range(36))


class TestRoundTrip:
    def test_serialize_reload_bitwise(self, tmp_path, multi_od_scenario):
        path = tmp_path / "roundtrip.json"
        save_scenario(multi_od_scenario, path)
        again = load_scenario(path)
        assert again.grid == multi_od_scenario.grid
        assert again.stations == multi_od_scenario.stations
        assert again.params == multi_od_scenario.params
        assert again.policy == multi_od_scenario.policy
        for a, b in zip(again.groups, multi_od_scenario.groups):
            assert a == b  # dataclass equality is exact on floats

    def test_dict_round_trip_numerics(self, single_od_scenario):
        doc = scenario_to_dict(single_od_scenario)
        again = scenario_from_dict(json.loads(json.dumps(doc)))
        np.testing.assert_array_equal(again.group_demands(), single_od_scenario.group_demands())


class TestDerivedLookups:
    def test_mode_route_respects_served_by(self):
        doc = minimal_doc()
        doc["stations"] = [
            {"id": "a", "position_m": 0, "served_by": ["bus"]},
            {"id": "b", "position_m": 4000, "served_by": ["bus", "dras"]},
            {"id": "c", "position_m": 9000, "served_by": ["bus", "dras"]},
        ]
        sc = scenario_from_dict(doc)
        assert [s.station_id for s in sc.mode_route("bus")] == ["a", "b", "c"]
        assert [s.station_id for s in sc.mode_route("dras")] == ["b", "c"]
        g = sc.groups[0]  # a -> b: origin lacks DRAS service
        assert sc.mode_available(g, "bus")
        assert not sc.mode_available(g, "dras")

    def test_backward_trip_is_car_only(self):
        doc = minimal_doc()
        doc["demand_groups"][0]["origin"] = "b"
        doc["demand_groups"][0]["destination"] = "a"
        sc = scenario_from_dict(doc)
        g = sc.groups[0]
        assert not sc.mode_available(g, "bus")
        assert sc.mode_available(g, "car")

    def test_trip_length_defaults_to_station_distance(self):
        sc = scenario_from_dict(minimal_doc())
        assert sc.groups[0].trip_length_m == 8000
