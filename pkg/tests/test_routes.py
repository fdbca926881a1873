import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixroadnet.routes import (
    EXIT_BOUNDARY,
    EXIT_INTERNAL,
    EXIT_RAMP,
    Route,
    RouteChoiceParams,
    assign_demand,
    blend_compliance,
    logit_split,
    route_table,
)

# Trip routes of the two-subregion network, as enumerated by hand:
# (origin, destination) -> route node sequences.
EXPECTED_ROUTES = {
    "1-1": ("1",),
    "1-2": ("1", "2"),
    "1-E12-2": ("1", "E12", "2"),
    "1-E12": ("1", "E12"),
    "1-2-E12": ("1", "2", "E12"),
    "1-E21": ("1", "E21"),
    "E12-1": ("E12", "1"),
    "E12-2": ("E12", "2"),
    "E12-1-2": ("E12", "1", "2"),
    "E12-E12": ("E12",),
    "2-2": ("2",),
    "2-1": ("2", "1"),
    "2-E21-1": ("2", "E21", "1"),
    "2-E21": ("2", "E21"),
    "2-1-E21": ("2", "1", "E21"),
    "2-E12": ("2", "E12"),
    "E21-2": ("E21", "2"),
    "E21-1": ("E21", "1"),
    "E21-2-1": ("E21", "2", "1"),
    "E21-E21": ("E21",),
}

EXPECTED_CHOICE_SETS = {
    ("1", "2"): ("1-2", "1-E12-2"),
    ("1", "E12"): ("1-E12", "1-2-E12"),
    ("E12", "2"): ("E12-2", "E12-1-2"),
    ("2", "1"): ("2-1", "2-E21-1"),
    ("2", "E21"): ("2-E21", "2-1-E21"),
    ("E21", "1"): ("E21-1", "E21-2-1"),
}


class TestRouteTable:
    def test_route_set_is_golden(self):
        t = route_table()
        assert {r.rid for r in t.routes} == set(EXPECTED_ROUTES)
        for r in t.routes:
            assert r.nodes == EXPECTED_ROUTES[r.rid], r.rid

    def test_each_od_has_one_or_two_routes(self):
        t = route_table()
        for od, rids in t.od_routes.items():
            assert len(rids) in (1, 2), od
        assert len(t.od_classes) == 14

    def test_choice_sets_golden(self):
        t = route_table()
        got = {c.od: (c.primary, c.alternate) for c in t.choice_sets}
        assert got == EXPECTED_CHOICE_SETS

    def test_expressway_used_at_most_once(self):
        for r in route_table().routes:
            assert sum(1 for n in r.nodes if n.startswith("E")) <= 1

    def test_no_system_revisited(self):
        for r in route_table().routes:
            assert len(set(r.nodes)) == len(r.nodes)

    def test_route_validation_rejects_revisit(self):
        with pytest.raises(ValueError, match="revisited"):
            Route(rid="bad", od=("1", "1"), nodes=("1", "2", "1"))

    def test_region_legs_have_single_exit_family(self):
        t = route_table()
        for g in ("1", "2"):
            for leg in t.region_legs[g]:
                assert leg.exit_family in (EXIT_INTERNAL, EXIT_BOUNDARY, EXIT_RAMP)
                if leg.exit_family == EXIT_RAMP:
                    assert leg.ramp_target in ("E12", "E21")

    def test_offramp_terminating_routes(self):
        # trips ending in a region reached through an off-ramp never get a leg
        t = route_table()
        legs1 = {leg.route for leg in t.region_legs["1"]}
        assert "E12-1" not in legs1 and "2-E21-1" not in legs1 and "E21-1" not in legs1
        assert "E12-1-2" in legs1  # continues through region 1


class TestLogit:
    def test_equal_times_half(self):
        p = RouteChoiceParams(0.5, 0.0)
        assert logit_split(600.0, 600.0, p) == pytest.approx(0.5, rel=1e-12)

    def test_reference_value(self):
        # mu = 1/120 per second, times 600 s vs 720 s: 1 / (1 + e^-1)
        p = RouteChoiceParams(1 / 120, 0.0, time_unit=1.0)
        assert logit_split(600.0, 720.0, p) == pytest.approx(1 / (1 + math.exp(-1)), rel=1e-9)

    def test_insensitive_drivers(self):
        p = RouteChoiceParams(0.0, 0.0)
        assert logit_split(100.0, 5000.0, p) == pytest.approx(0.5, rel=1e-12)

    def test_shift_invariance(self):
        p = RouteChoiceParams(0.5, 0.0)
        a = logit_split(600.0, 720.0, p)
        b = logit_split(600.0 + 1234.5, 720.0 + 1234.5, p)
        assert abs(float(a) - float(b)) <= 1e-12

    def test_sharp_drivers_limit(self):
        p = RouteChoiceParams(1e3, 0.0, time_unit=1.0)
        assert logit_split(600.0, 660.0, p) > 0.999

    def test_decreasing_in_own_time(self):
        p = RouteChoiceParams(0.5, 0.0)
        ts = np.linspace(100, 3000, 50)
        vals = logit_split(ts, 1500.0, p)
        assert np.all(np.diff(vals) < 0)

    def test_overflow_guarded(self):
        p = RouteChoiceParams(10.0, 0.0, time_unit=1.0)
        assert logit_split(0.0, 1e6, p) == pytest.approx(1.0)
        assert logit_split(1e6, 0.0, p) == pytest.approx(0.0)


class TestBlend:
    def test_no_compliance(self):
        assert blend_compliance(0.6, 0.2, 0.0) == pytest.approx(0.6)

    def test_full_compliance(self):
        assert blend_compliance(0.6, 0.2, 1.0) == pytest.approx(0.2)

    def test_half(self):
        assert blend_compliance(0.6, 0.2, 0.5) == pytest.approx(0.4, rel=1e-12)

    @given(
        driver=st.floats(0.0, 1.0),
        guidance=st.floats(0.0, 1.0),
        eps=st.floats(0.0, 1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_stays_in_unit_interval(self, driver, guidance, eps):
        out = float(blend_compliance(driver, guidance, eps))
        assert -1e-12 <= out <= 1 + 1e-12


class TestAssignDemand:
    def test_two_route_split(self):
        t = route_table()
        od = np.zeros(t.n_od)
        od[t.od_index[("1", "2")]] = 1000 / 3600
        splits = np.full(6, 0.7)
        q = assign_demand(od, splits, t)
        assert q[t.index["1-2"]] == pytest.approx(700 / 3600, rel=1e-12)
        assert q[t.index["1-E12-2"]] == pytest.approx(300 / 3600, rel=1e-12)

    def test_single_route_pass_through(self):
        t = route_table()
        od = np.zeros(t.n_od)
        od[t.od_index[("1", "1")]] = 2.5
        q = assign_demand(od, np.full(6, 0.5), t)
        assert q[t.index["1-1"]] == 2.5

    def test_zero_demand(self):
        t = route_table()
        q = assign_demand(np.zeros(t.n_od), np.full(6, 0.3), t)
        assert np.all(q == 0.0)

    @given(st.lists(st.floats(0.0, 5.0), min_size=14, max_size=14), st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6))
    @settings(max_examples=100, deadline=None)
    def test_demand_conserved_per_od(self, od_list, split_list):
        t = route_table()
        od = np.array(od_list)
        q = assign_demand(od, np.array(split_list), t)
        for oi, odk in enumerate(t.od_classes):
            total = sum(q[t.index[r]] for r in t.od_routes[odk])
            assert total == pytest.approx(od[oi], rel=1e-12, abs=1e-15)
