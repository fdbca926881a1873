import numpy as np
import pytest

from mixroadnet.network import total_time_spent
from mixroadnet.routes import route_table

from conftest import VPH, make_model


def ngnc_splits(model, state):
    return model.realized_splits(state, model.logit_splits(state))


def uniform_controls():
    return np.ones(2), np.ones((2, 2))


class TestTravelTimes:
    def test_internal_route_free_flow(self, model17):
        state = model17.zero_state()
        times = model17.travel_times(state)
        t = route_table()
        assert times[t.index["1-1"]] == pytest.approx(1667 / 9, rel=1e-9)
        assert times[t.index["1-1"]] == pytest.approx(185.2, abs=0.1)

    def test_expressway_route_composition_free_flow(self, model17):
        state = model17.zero_state()
        times = model17.travel_times(state)
        t = route_table()
        vf1 = 80 / 3.6
        vf2 = 40 / 3.6
        # origin leg to the ramp, on-ramp cell, merge cell 7 .. diverge cell 11, off-ramp cell
        expected = 1138 / 9 + 500 / vf2 + 5 * 500 / vf1 + 500 / vf2
        assert times[t.index["1-E12-2"]] == pytest.approx(expected, rel=1e-9)

    def test_through_route_free_flow(self, model17):
        state = model17.zero_state()
        times = model17.travel_times(state)
        t = route_table()
        assert times[t.index["E12-E12"]] == pytest.approx(17 * 500 / (80 / 3.6), rel=1e-9)

    def test_symmetric_state_symmetric_times(self, model17):
        state = model17.initial_state([4000, 4000])
        times = model17.travel_times(state)
        t = route_table()
        for a, b in (("1-2", "2-1"), ("1-E12-2", "2-E21-1"), ("E12-E12", "E21-E21"), ("1-E12", "2-E21")):
            assert times[t.index[a]] == pytest.approx(times[t.index[b]], rel=1e-12)

    def test_congestion_never_speeds_up_a_route(self, model17):
        empty = model17.zero_state()
        t_empty = model17.travel_times(empty)
        loaded = model17.initial_state([6000, 3000])
        loaded.exp[0].k_main[:, :] = 0.02  # 20 veh/km on every E12 cell/route? keep modest
        t_loaded = model17.travel_times(loaded)
        assert np.all(t_loaded >= t_empty - 1e-9)


class TestStepNetwork:
    def test_empty_fixed_point(self, model17):
        state = model17.zero_state()
        u, eta = uniform_controls()
        new, flows = model17.advance(state, u, eta, np.full(6, 0.5), np.zeros(14))
        assert model17.vehicles_total(new) == 0.0
        assert flows.completed_total == 0.0

    def test_arterial_only_od_feeds_boundary(self, model17):
        # all (1,2) demand on the arterial route: SR2 gains the admitted
        # boundary flow, the expressways stay empty
        t = route_table()
        state = model17.initial_state([1000, 0])
        state.n[0][:] = 0.0
        state.n[0][t.leg_index["1"]["1-2"]] = 1000.0
        od = np.zeros(14)
        u, eta = uniform_controls()
        splits = np.ones(6)  # primary = arterial route
        new, flows = model17.advance(state, u, eta, splits, od)
        admitted = flows.boundary_admitted[0].sum()
        assert admitted > 0
        assert new.n[1].sum() == pytest.approx(admitted * model17.dt, rel=1e-12)
        for e in (0, 1):
            assert model17.exp_models[e].vehicles(new.exp[e]) == 0.0

    def test_expressway_od_with_closed_meter(self, model17):
        # all (1,2) demand via the expressway and eta = 0: the on-ramp stores
        # vehicles, the mainline stays empty
        t = route_table()
        state = model17.zero_state()
        state.n[0][t.leg_index["1"]["1-E12-2"]] = 500.0
        od = np.zeros(14)
        u = np.ones(2)
        eta = np.zeros((2, 2))
        new, flows = model17.advance(state, u, eta, np.zeros(6), od)
        assert new.exp[0].k_on[0].sum() > 0
        assert new.exp[0].k_main.sum() == 0.0
        assert flows.ramp_admitted[0].sum() > 0

    def test_conservation_randomized(self, model17):
        rng = np.random.default_rng(11)
        state = model17.initial_state([5000, 2500])
        gen = done = 0.0
        v0 = float(model17.vehicles_total(state))
        for k in range(400):
            od = rng.uniform(0, 1.2, 14)
            u = rng.uniform(0, 1, 2)
            eta = rng.uniform(0, 1, (2, 2))
            if k % 6 == 0:
                splits = model17.realized_splits(state, rng.uniform(0, 1, 6))
            state, fl = model17.advance(state, u, eta, splits, od)
            gen += model17.dt * fl.demand_total
            done += model17.dt * fl.completed_total
        v1 = float(model17.vehicles_total(state))
        assert v0 + gen - done == pytest.approx(v1, abs=1e-6 * max(gen, 1.0))
        model17.validate_state(state)

    def test_symmetric_scenario_mirrors(self, model17):
        t = route_table()
        state = model17.initial_state([4000, 4000])
        od = np.zeros(14)
        for a, b in ((("1", "2"), ("2", "1")), (("1", "1"), ("2", "2")), (("E12", "E12"), ("E21", "E21")),
                     (("1", "E12"), ("2", "E21")), (("E12", "2"), ("E21", "1"))):
            od[t.od_index[a]] = od[t.od_index[b]] = 0.8
        u, eta = uniform_controls()
        for _ in range(120):
            splits = model17.realized_splits(state, model17.logit_splits(state))
            state, _ = model17.advance(state, u, eta, splits, od)
        assert state.n[0].sum() == pytest.approx(state.n[1].sum(), rel=1e-9)
        assert np.allclose(
            state.exp[0].k_main.sum(axis=-1), state.exp[1].k_main.sum(axis=-1), rtol=1e-9, atol=1e-15
        )

    def test_determinism(self, model17):
        rng_od = np.random.default_rng(5).uniform(0, 1.0, (50, 14))

        def run():
            s = model17.initial_state([3000, 1500])
            u, eta = uniform_controls()
            for k in range(50):
                splits = model17.realized_splits(s, np.full(6, 0.4))
                s, _ = model17.advance(s, u, eta, splits, rng_od[k])
            return s

        a, b = run(), run()
        assert np.array_equal(a.n[0], b.n[0]) and np.array_equal(a.n[1], b.n[1])
        for e in (0, 1):
            assert np.array_equal(a.exp[e].k_main, b.exp[e].k_main)
            assert np.array_equal(a.queue[e], b.queue[e])


class TestBatchedSemantics:
    def test_batched_matches_unbatched(self, model17):
        rng = np.random.default_rng(9)
        state = model17.initial_state([4000, 2000])
        od = rng.uniform(0, 1.0, 14)
        u3 = rng.uniform(0, 1, (3, 2))
        eta3 = rng.uniform(0, 1, (3, 2, 2))
        splits3 = rng.uniform(0, 1, (3, 6))
        batched = state.tile(3)
        nb, _ = model17.advance(batched, u3, eta3, splits3, od)
        for i in range(3):
            ni, _ = model17.advance(state, u3[i], eta3[i], splits3[i], od)
            assert np.allclose(nb.take(i).n[0], ni.n[0], rtol=0, atol=0)
            assert np.allclose(nb.take(i).exp[0].k_main, ni.exp[0].k_main, rtol=0, atol=0)


class TestPredictAndTts:
    def test_tts_initial_accumulations(self, model17):
        state = model17.initial_state([6000, 3000])
        # one 10 s step with an empty expressway: 90000 veh*s
        assert float(model17.dt * model17.vehicles_total(state)) == pytest.approx(90000.0)

    def test_total_time_spent_linearity(self):
        counts = np.array([120.0, 80.0, 40.0])
        assert total_time_spent(counts, 10.0) == pytest.approx(2400.0)
        assert total_time_spent(2 * counts, 10.0) == pytest.approx(4800.0)

    def test_total_time_spent_empty(self):
        assert total_time_spent(np.zeros(5), 10.0) == 0.0

    def test_predict_zero_horizonless(self, model17):
        state = model17.initial_state([100, 100])
        theta = np.full((1, 6), 0.5)
        u = np.ones((1, 2))
        eta = np.ones((1, 2, 2))
        cost = model17.predict(state, theta, u, eta, np.zeros((10, 14)), 0, 0, 6)
        assert float(cost) == 0.0

    def test_predict_deterministic_and_pure(self, model17):
        state = model17.initial_state([4000, 2000])
        before = state.n[0].copy()
        theta = np.full((2, 6), 0.5)
        u = np.full((2, 2), 0.8)
        eta = np.full((2, 2, 2), 0.9)
        demand = np.full((60, 14), 0.3)
        c1 = model17.predict(state, theta, u, eta, demand, 0, 3, 6)
        c2 = model17.predict(state, theta, u, eta, demand, 0, 3, 6)
        assert float(c1) == float(c2)
        assert np.array_equal(state.n[0], before)
        assert float(c1) > 0

    def test_decreasing_vehicles_drain(self, model17):
        # no demand: vehicles only leave, so per-step counts are non-increasing
        state = model17.initial_state([2000, 1000])
        u, eta = uniform_controls()
        counts = []
        for _ in range(30):
            splits = model17.realized_splits(state, model17.logit_splits(state))
            state, fl = model17.advance(state, u, eta, splits, np.zeros(14))
            counts.append(float(fl.vehicles_before))
        assert all(a >= b for a, b in zip(counts, counts[1:]))
