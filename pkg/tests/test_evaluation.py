import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prefroute.core import HistoryDataset, Routing
from prefroute.evaluation import (
    DRIFT_AFTER,
    DRIFT_BEFORE,
    EvalConfig,
    EvalRecord,
    arc_difference,
    build_problem,
    drift_scenario,
    evaluate_step,
    format_sweep_table,
    incremental_evaluate,
    initial_training_size,
    parameter_sweep,
    route_difference,
    routing_km,
)
from prefroute.learn import DistanceMatrix, Scheme, WeighingScheme
from prefroute.synthetic import SyntheticConfig, generate_synthetic

from conftest import make_dataset, make_instance
from test_core import routings


def line_distances(n):
    xs = np.arange(n + 1, dtype=float)
    return DistanceMatrix(np.abs(xs[:, None] - xs[None, :]), tuple(str(i) for i in range(n + 1)))


class TestRouteDifference:
    def test_identity(self):
        r = Routing([[1, 2], [3, 4]])
        assert route_difference(r, r) == 0.0

    def test_one_misassigned(self):
        assert route_difference(Routing([[1, 2, 3], [4]]), Routing([[1, 2], [3, 4]])) == 25.0

    def test_order_free(self):
        assert route_difference(Routing([[2], [1]]), Routing([[1], [2]])) == 0.0

    def test_within_route_order_ignored(self):
        assert route_difference(Routing([[2, 1]]), Routing([[1, 2]])) == 0.0

    def test_unmatched_actual_route_counts_fully(self):
        assert route_difference(Routing([[1, 2, 3]]), Routing([[1], [2, 3]])) == pytest.approx(100 / 3)

    def test_different_stop_sets(self):
        with pytest.raises(ValueError):
            route_difference(Routing([[1]]), Routing([[2]]))

    @given(routings(), routings())
    def test_bounds(self, a, b):
        if a.stop_set == b.stop_set:
            assert 0 <= route_difference(a, b) <= 100


class TestArcDifference:
    def test_identity(self):
        r = Routing([[1, 2], [3]])
        assert arc_difference(r, r) == 0.0

    def test_reversed(self):
        assert arc_difference(Routing([[2, 1]]), Routing([[1, 2]])) == 100.0

    def test_one_shared_pair(self):
        # six actual arcs, two of them shared
        assert arc_difference(Routing([[1, 2, 5, 4, 3]]), Routing([[1, 2, 3, 4, 5]])) == pytest.approx(200 / 3)

    def test_different_stop_sets(self):
        with pytest.raises(ValueError):
            arc_difference(Routing([[1]]), Routing([[1, 2]]))

    @given(routings(max_stops=7), st.data())
    def test_reversing_one_tour(self, r, data):
        idx = data.draw(st.integers(0, len(r) - 1))
        tours = [list(t) for t in r.tours]
        if len(tours[idx]) < 2:
            return
        length = len(tours[idx])
        tours[idx] = tours[idx][::-1]
        expected = 100.0 * (length + 1) / (r.n_stops + len(r))
        assert arc_difference(Routing(tours), r) == pytest.approx(expected)

    def test_reversing_one_tour_exhaustive(self):
        import itertools

        for n in range(1, 5):
            for perm in itertools.permutations(range(1, n + 1)):
                for cut in range(1, n + 1):
                    tours = [list(perm[:cut])] + ([list(perm[cut:])] if cut < n else [])
                    r = Routing(tours)
                    for k, t in enumerate(tours):
                        flipped = [list(x) for x in tours]
                        flipped[k] = t[::-1]
                        kept = len(Routing(flipped).arcs() & r.arcs())
                        # only a single-stop tour maps onto itself
                        expected_kept = len(r.arcs()) - (len(t) + 1 if len(t) > 1 else 0)
                        assert kept == expected_kept
                        assert arc_difference(Routing(flipped), r) == pytest.approx(
                            100.0 * (len(r.arcs()) - kept) / len(r.arcs()))

    @given(routings(), st.data())
    def test_relabeling_invariance(self, r, data):
        stops = sorted(r.stop_set)
        perm = data.draw(st.permutations(stops))
        other = Routing([list(t) for t in reversed(r.tours)])
        mapping = dict(zip(stops, perm))
        for metric in (arc_difference, route_difference):
            assert metric(other.relabel(mapping), r.relabel(mapping)) == metric(other, r)


def test_routing_km():
    dist = line_distances(3).dist
    assert routing_km(Routing([[1, 3], [2]]), dist) == 1 + 2 + 3 + 2 + 2


class TestConfig:
    @pytest.mark.parametrize("kw", [{"lam": -1}, {"beta": 1.2}, {"order": 3}, {"theta": 0},
                                    {"theta": "nope"}, {"solver": "lp"}, {"baseline": "km"}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            EvalConfig(**kw)

    def test_record_ranges(self):
        base = dict(timestamp=1, scheme="unif", order=1, lam=1, beta=1, alpha=0.7, rd_pct=0, ad_pct=0,
                    predicted_km=0, actual_km=0, solve_s=0)
        EvalRecord(**base)
        with pytest.raises(ValueError):
            EvalRecord(**{**base, "rd_pct": 101})
        with pytest.raises(ValueError):
            EvalRecord(**{**base, "actual_km": -1})


class TestIncremental:
    def test_initial_size(self):
        assert initial_training_size(30) == 22
        with pytest.raises(ValueError):
            initial_training_size(30, 1.0)

    def test_sigma_range(self):
        ds = make_dataset([[[1, 2]]] * 8)
        recs = incremental_evaluate(ds, EvalConfig(lam=0.0))
        assert [r.timestamp for r in recs] == [7, 8]

    @pytest.mark.parametrize("kind", list(Scheme))
    @pytest.mark.parametrize("order", [1, 2])
    def test_memorization(self, kind, order):
        ds = make_dataset([[[3, 1], [4, 2, 5]]] * 5)
        recs = incremental_evaluate(ds, EvalConfig(WeighingScheme(kind), lam=0.0, order=order), split=0.2)
        assert len(recs) == 4
        assert all(r.rd_pct == 0 and r.ad_pct == 0 for r in recs)

    def test_target_routing_never_leaks(self):
        base = [[[1, 2, 3]], [[1, 2, 3]], [[2, 1], [3]]]
        a = make_dataset(base + [[[1, 2, 3]]])
        b = make_dataset(base + [[[3, 2, 1]]])
        cfg = EvalConfig(lam=1.0)
        pa, pb = build_problem(a.prefix(3), a[4], cfg), build_problem(b.prefix(3), b[4], cfg)
        assert np.array_equal(pa.costs, pb.costs)
        d = line_distances(3)
        ra, rb = evaluate_step(a, 4, cfg, d), evaluate_step(b, 4, cfg, d)
        assert ra.predicted_km == rb.predicted_km
        assert ra.actual_km == rb.actual_km

    def test_sentinel_gets_no_mass_at_its_own_step(self, monkeypatch):
        import prefroute.evaluation as ev
        from prefroute.learn import frequency_matrix

        seen = []
        real = ev.estimate_first_order

        def spy(train, *a, **kw):
            seen.append(frequency_matrix(train, {i.timestamp: 1.0 for i in train}, (0, 1, 2, 3)))
            return real(train, *a, **kw)

        monkeypatch.setattr(ev, "estimate_first_order", spy)
        sentinel = [[3, 2, 1]]
        ds = make_dataset([[[1, 2, 3]]] * 3 + [sentinel])
        evaluate_step(ds, 4, EvalConfig(lam=1.0))
        f = seen[-1]
        assert all(f[i, j] == 0 for i, j in Routing(sentinel).arcs())

    def test_unseen_stop_gets_smoothed_row(self):
        ds = make_dataset([[[1, 2]], [[1, 2]], [[1, 2, 3]]])
        rec = evaluate_step(ds, 3, EvalConfig(lam=1.0))
        assert 0 <= rec.ad_pct <= 100

    def test_too_short(self):
        with pytest.raises(ValueError):
            incremental_evaluate(make_dataset([[[1]]]))

    def test_distance_baseline_follows_km(self):
        ds = make_dataset([[[3, 1, 2]]] * 4)
        recs = incremental_evaluate(ds, EvalConfig(baseline="dist"), distances=line_distances(3))
        assert all(r.predicted_km == 6 and r.actual_km == 8 for r in recs)

    def test_group_by_weekday(self):
        insts = [make_instance(t, [[1, 2]] if t % 2 else [[2, 1]], weekday=t % 2) for t in range(1, 13)]
        ds = HistoryDataset(tuple(insts))
        recs = incremental_evaluate(ds, EvalConfig(lam=0.0), split=0.5, group_by="weekday")
        assert [r.timestamp for r in recs] == [7, 8, 9, 10, 11, 12]
        assert all(r.group == r.timestamp % 2 and r.ad_pct == 0 for r in recs)

    def test_parallel_matches_serial(self):
        ds = make_dataset([[[1, 2], [3]], [[2, 1], [3]], [[1, 2, 3]]] * 3)
        cfg = EvalConfig()
        d = line_distances(3)
        serial = incremental_evaluate(ds, cfg, split=0.5, distances=d)
        parallel = incremental_evaluate(ds, cfg, split=0.5, distances=d, jobs=2)
        strip = [replace(r, solve_s=0) for r in serial], [replace(r, solve_s=0) for r in parallel]
        assert strip[0] == strip[1]


class TestDrift:
    def test_window_and_indices(self):
        ds = make_dataset([[[1, 2]]] * 20)
        recs = drift_scenario(ds, "drop", EvalConfig(lam=0.0), drift_t=8)
        assert [r.drift_index for r in recs] == list(range(-DRIFT_BEFORE, DRIFT_AFTER))
        assert [r.timestamp for r in recs] == list(range(5, 18))
        assert all(r.mode == "drop" for r in recs)

    def test_rise_reverses(self):
        ds = make_dataset([[[1, 2]]] * 20)
        recs = drift_scenario(ds, "rise", EvalConfig(lam=0.0), drift_t=14)
        assert recs[0].drift_index == -3 and len(recs) == 13

    def test_errors(self):
        ds = make_dataset([[[1, 2]]] * 12)
        with pytest.raises(ValueError):
            drift_scenario(ds, "drop")
        with pytest.raises(ValueError):
            drift_scenario(ds, "drop", drift_t=5)
        with pytest.raises(ValueError):
            drift_scenario(ds, "sideways", drift_t=5)
        with pytest.raises(ValueError):
            drift_scenario(ds, "drop", drift_t=40)

    def test_stationary_has_no_spike(self):
        ds = make_dataset([[[1, 2], [3, 4]]] * 20)
        recs = drift_scenario(ds, "drop", EvalConfig(lam=0.0), drift_t=8)
        assert all(r.ad_pct == 0 for r in recs)

    def test_spike_at_switch(self):
        cfg = SyntheticConfig(n_regular=8, n_adhoc=0, p_regular=1.0, weeks=20, weekdays=1,
                              fleet_profile=(2, 2), drift_week=8, planner_noise=0.0,
                              post_drift_regular=8, drift_reshuffle=1.0, capacity=100, seed=3)
        ds, dist, _ = generate_synthetic(cfg)
        for kind in (Scheme.UNIF, Scheme.EXP):
            recs = drift_scenario(ds, "drop", EvalConfig(WeighingScheme(kind), lam=0.0, exact_fleet=True),
                                  dist)
            by = {r.drift_index: r.ad_pct for r in recs}
            assert by[0] > max(by[i] for i in (-3, -2, -1))


class TestSweep:
    def test_beta_endpoints(self):
        ds = make_dataset([[[1, 2], [3]], [[2, 1], [3]], [[1, 2, 3]]] * 2)
        d = line_distances(3)
        cfg = EvalConfig(lam=1.0)
        rows = parameter_sweep(ds, "beta", [0.0, 1.0], cfg, split=0.5, distances=d, with_baselines=True)
        assert [r.value for r in rows] == ["dist", 0.0, 1.0, "actual"]
        pure = incremental_evaluate(ds, cfg, 0.5, d)
        assert rows[2].ad_pct == pytest.approx(sum(r.ad_pct for r in pure) / len(pure))
        assert rows[-1].rd_pct == 0 and math.isnan(rows[-1].seconds)

    def test_table_layout(self):
        ds = make_dataset([[[1, 2], [3]], [[2, 1], [3]]] * 2)
        rows = parameter_sweep(ds, "beta", [0, 0.2, 1], EvalConfig(), 0.5, line_distances(3))
        table = format_sweep_table(rows, "beta", timing=False)
        lines = table.splitlines()
        assert lines[0].split("\t") == ["beta", "0", "0.2", "1"]
        assert [ln.split("\t")[0] for ln in lines[1:]] == ["RD", "AD", "Avg Total Dist (km)", "Avg Time (s)"]
        assert lines[-1].split("\t")[1:] == ["-", "-", "-"]

    def test_bad_axis(self):
        with pytest.raises(ValueError):
            parameter_sweep(make_dataset([[[1]]] * 3), "gamma", [1])
        with pytest.raises(ValueError):
            parameter_sweep(make_dataset([[[1]]] * 3), "beta", [])


def test_smoothing_removes_clamped_arcs():
    ds = make_dataset([[[1, 2], [3]], [[1, 2], [3]], [[1, 2], [3]]])
    clamp = -math.log(1e-12)
    off = ~np.eye(4, dtype=bool)
    rough = build_problem(ds.prefix(2), ds[3], EvalConfig(lam=0.0)).costs[off]
    smooth = build_problem(ds.prefix(2), ds[3], EvalConfig(lam=1.0)).costs[off]
    assert np.any(rough >= clamp - 1e-9)
    assert np.all(smooth < clamp - 1)
