import numpy as np
import pytest
from conftest import leaf, make_set, split, stub_model
from hypothesis import given, settings
from hypothesis import strategies as st

from transferfx import (BoostConfig, SplitPlan, ValidationError,
                        fdp_estimate, fdp_threshold, fit_transfer,
                        make_split_plan, mirror_statistics, multi_split_select,
                        partial_dependence, select_taxa)
from transferfx.mirrors import _scenario_column, _scenario_matrix
from transferfx.transfer import forecast
from transferfx.ts_core import segment_anchor_indices


def recipe(P=2, Q=2, rounds=10):
    cfg = BoostConfig(n_rounds=rounds, max_depth=2, min_samples_leaf=2, seed=0)
    return lambda sset: fit_transfer(sset, P, Q, cfg, threads=1)


class TestMirrorAlgebra:
    def test_hand_values(self):
        M = mirror_statistics([2.0, -1.0, 3.0], [0.5, -0.25, -1.0])
        np.testing.assert_array_equal(M, [2.5, 1.25, -4.0])

    def test_sign_zero_is_zero(self):
        M = mirror_statistics([0.0, 1.0], [5.0, 0.0])
        np.testing.assert_array_equal(M, [0.0, 0.0])

    def test_antisymmetric_in_one_flip(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=20), rng.normal(size=20)
        np.testing.assert_array_equal(mirror_statistics(a, -b),
                                      -mirror_statistics(a, b))

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            mirror_statistics([1.0], [1.0, 2.0])


class TestFdpThreshold:
    def test_fdp_estimate_oracle(self):
        M = np.array([3.0, 2.0, -1.0, -4.0])
        assert fdp_estimate(M, 1.5) == 0.5      # 1 below -1.5, 2 above 1.5
        assert fdp_estimate(M, 5.0) == 0.0      # empty selection -> max(1, .)

    def test_frozen_oracle(self):
        # M = [5, 4, 3, -0.5], q = 0.25: t=0 gives FDP 1/3 > q; t=0.5 gives 0/3
        t, sel = fdp_threshold([5.0, 4.0, 3.0, -0.5], 0.25)
        assert t == 0.5
        np.testing.assert_array_equal(sel, [0, 1, 2])

    def test_all_negative_never_selects(self):
        t, sel = fdp_threshold([-1.0, -2.0, -3.0], 0.2)
        assert t == float("inf") and sel.size == 0

    def test_unattainable_q(self):
        # one positive, one larger negative: at every t with selection FDP >= 1
        t, sel = fdp_threshold([1.0, -2.0], 0.2)
        assert t == float("inf") and sel.size == 0

    def test_brute_force_agreement(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            M = rng.normal(size=50) * rng.choice([0.5, 2.0], size=50)
            q = float(rng.choice([0.1, 0.2, 0.3]))
            t_star, sel = fdp_threshold(M, q)
            best = (float("inf"), np.empty(0, dtype=np.int64))
            for t in sorted(np.unique(np.concatenate([np.abs(M), [0.0]]))):
                chosen = np.nonzero(M > t)[0]
                if chosen.size and fdp_estimate(M, t) <= q:
                    best = (float(t), chosen)
                    break
            assert t_star == best[0]
            np.testing.assert_array_equal(sel, best[1])

    def test_q_validation(self):
        for q in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValidationError):
                fdp_threshold([1.0], q)


def reference_multi_split(splits, n_units, q):
    """Plain-loop restatement: accumulate sorted rates until the budget is
    spent; survivors are everything tied with or above the first rate that
    did not fit (the exclusion never splits a group of tied rates)."""
    inclusion = np.zeros(n_units)
    for sel in splits:
        if len(sel):
            for u in sel:
                inclusion[u] += 1.0 / len(sel)
    inclusion /= len(splits)
    values = sorted(inclusion.tolist())
    total, ell = 0.0, 0
    for v in values:
        total += v
        if total <= q:
            ell += 1
        else:
            break
    if ell == n_units:
        return np.empty(0, dtype=np.int64), inclusion
    return np.nonzero(inclusion >= values[ell])[0], inclusion


class TestMultiSplit:
    def test_unanimous_unit_survives(self):
        sel, rates = multi_split_select([(0,), (0,)], 3, 0.2)
        np.testing.assert_array_equal(sel, [0])
        np.testing.assert_array_equal(rates, [1.0, 0.0, 0.0])

    def test_unanimous_set_survives_any_q(self):
        # ten units tied at rate 0.1: the q=0.2 budget covers two of them,
        # but the exclusion must not split the tied group, so all survive
        splits = [tuple(range(10))] * 3
        for q in (0.05, 0.2, 0.8):
            sel, rates = multi_split_select(splits, 12, q)
            np.testing.assert_array_equal(sel, range(10))
        np.testing.assert_allclose(rates[:10], 0.1)

    def test_cutoff_moves_with_q(self):
        splits = [(0, 1), (1,)]
        sel, rates = multi_split_select(splits, 3, 0.2)
        np.testing.assert_array_equal(rates, [0.25, 0.75, 0.0])
        np.testing.assert_array_equal(sel, [0, 1])   # prefix {0.0} only
        sel, _ = multi_split_select(splits, 3, 0.3)
        np.testing.assert_array_equal(sel, [1])      # prefix {0.0, 0.25}

    def test_all_empty_splits_select_nothing(self):
        sel, rates = multi_split_select([(), (), ()], 4, 0.2)
        assert sel.size == 0
        np.testing.assert_array_equal(rates, 0.0)

    def test_needs_two_splits(self):
        with pytest.raises(ValidationError):
            multi_split_select([(0,)], 3, 0.2)

    def test_brute_force_agreement(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n_units = int(rng.integers(2, 12))
            n_splits = int(rng.integers(2, 8))
            splits = []
            for _ in range(n_splits):
                k = int(rng.integers(0, n_units + 1))
                splits.append(tuple(rng.choice(n_units, size=k, replace=False)))
            q = float(rng.choice([0.1, 0.2, 0.4]))
            sel, rates = multi_split_select(splits, n_units, q)
            ref_sel, ref_rates = reference_multi_split(splits, n_units, q)
            np.testing.assert_array_equal(sel, ref_sel)
            np.testing.assert_allclose(rates, ref_rates, atol=1e-15)

    @given(st.lists(st.lists(st.integers(0, 9), max_size=10).map(
        lambda xs: tuple(set(xs))), min_size=2, max_size=6))
    @settings(max_examples=50, deadline=None)
    def test_property_matches_reference(self, splits):
        sel, rates = multi_split_select(splits, 10, 0.25)
        ref_sel, ref_rates = reference_multi_split(splits, 10, 0.25)
        np.testing.assert_array_equal(sel, ref_sel)
        np.testing.assert_allclose(rates, ref_rates, atol=1e-15)


class TestSplitPlan:
    def test_partition_and_balance(self):
        ids = [f"s{i}" for i in range(9)]
        plan = make_split_plan(ids, n_splits=10, seed=1)
        assert plan.n_splits == 10
        for a, b in plan.halves:
            assert sorted(a + b) == sorted(ids)
            assert abs(len(a) - len(b)) <= 1

    def test_deterministic_by_seed(self):
        ids = [f"s{i}" for i in range(8)]
        assert make_split_plan(ids, 5, seed=2) == make_split_plan(ids, 5, seed=2)
        assert make_split_plan(ids, 5, seed=2) != make_split_plan(ids, 5, seed=3)

    def test_too_few_subjects(self):
        with pytest.raises(ValidationError):
            make_split_plan(["a", "b", "c"], 2)
        with pytest.raises(ValidationError):
            make_split_plan(["a", "b", "c", "d"], 0)

    def test_plan_invariants_enforced(self):
        with pytest.raises(ValidationError):
            SplitPlan(((("a", "b"), ("b", "c")),), 0, 1)       # overlap
        with pytest.raises(ValidationError):
            SplitPlan(((("a", "b", "c"), ("d",)),), 0, 1)      # imbalance


class TestScenarioHandling:
    def test_vector_becomes_broadcast_matrix(self):
        v = _scenario_matrix(np.array([1.0, 2.0]), 2)
        assert v.shape == (2, 1)

    def test_wrong_channel_count(self):
        with pytest.raises(ValidationError):
            _scenario_matrix(np.ones(3), 2)
        with pytest.raises(ValidationError):
            _scenario_matrix(np.ones((3, 4)), 2)

    def test_column_clamp_and_broadcast(self):
        wide = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(_scenario_column(wide, -2), [1.0])
        np.testing.assert_array_equal(_scenario_column(wide, 2), [3.0])
        with pytest.raises(ValidationError):
            _scenario_column(wide, 3)
        narrow = np.array([[7.0]])
        np.testing.assert_array_equal(_scenario_column(narrow, 5), [7.0])


def two_tree_model():
    """J=1, P=1, Q=1: prediction = 2*1{w > 0.5} + 1{y_lag1 > 1.5}."""
    sset = make_set(n_subjects=4, J=1, T=8, S=0)
    trees = [[split(1, 0.5, leaf(0.0), leaf(2.0)),
              split(0, 1.5, leaf(0.0), leaf(1.0))]]
    return sset, stub_model(sset, 1, 1, trees)


class TestPartialDependence:
    def test_constant_model_is_flat(self):
        sset = make_set(J=2)
        model = stub_model(sset, 2, 2, [[leaf(5.0)], [leaf(-1.0)]])
        for h in (0, 1, 3):
            pd = partial_dependence(model, sset, np.ones(1), np.zeros(1), h)
            np.testing.assert_array_equal(pd, 0.0)

    def test_w_stump_every_lag(self):
        sset = make_set(J=3)
        J, P = 3, 2
        trees = [[split(P * J, 0.5, leaf(0.0), leaf(2.0))] for _ in range(J)]
        model = stub_model(sset, P, 2, trees)
        for h in (0, 1, 2):
            pd = partial_dependence(model, sset, np.ones(1), np.zeros(1), h)
            np.testing.assert_array_equal(pd, 2.0)

    def test_recursion_hand_oracle(self):
        # lag 0: y-terms cancel -> exactly 2.
        # lag 1 on-path: step-0 prediction >= 2 > 1.5, so 2 + 1 = 3;
        # off-path: step-0 prediction <= 1 < 1.5, so 0. PD_1 = 3.
        sset, model = two_tree_model()
        pd0 = partial_dependence(model, sset, np.ones(1), np.zeros(1), 0)
        pd1 = partial_dependence(model, sset, np.ones(1), np.zeros(1), 1)
        np.testing.assert_array_equal(pd0, 2.0)
        np.testing.assert_array_equal(pd1, 3.0)

    def test_matches_segmentwise_forecasts_for_q1(self):
        # With Q=1 every intervention feature comes from the scenario, so the
        # batched recursion must equal averaging forecast() over segments.
        sset = make_set(n_subjects=4, J=2, T=8)
        cfg = BoostConfig(n_rounds=8, max_depth=2, min_samples_leaf=2, seed=0)
        model = fit_transfer(sset, 2, 1, cfg, threads=1)
        from transferfx import InterventionScenario
        on, off = np.array([[1.0]]), np.array([[0.0]])
        for h in (0, 2):
            on_w = InterventionScenario(np.repeat(on, h + 1, axis=1))
            off_w = InterventionScenario(np.repeat(off, h + 1, axis=1))
            by_hand = []
            for s in sset.subjects:
                for tau in segment_anchor_indices(s.n_observed, model.P):
                    hist = s.truncated(tau)
                    diff = (forecast(model, hist, h + 1, on_w)
                            - forecast(model, hist, h + 1, off_w))
                    by_hand.append(diff[:, h])
            expected = np.mean(by_hand, axis=0)
            got = partial_dependence(model, sset, on, off, h)
            np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_errors(self):
        sset, model = two_tree_model()
        with pytest.raises(ValidationError):
            partial_dependence(model, sset, np.ones(1), np.zeros(1), -1)
        with pytest.raises(ValidationError):
            sset.restrict_subjects(())  # empty halves can never reach PD


class TestSelectTaxa:
    def small_run(self, n_splits=3, seed=0, lags=(0, 1)):
        sset = make_set(n_subjects=6, J=3, T=10)
        return select_taxa(sset, np.ones(1), np.zeros(1), recipe(),
                           q=0.2, lags=lags, n_splits=n_splits, seed=seed)

    def test_deterministic(self):
        a, b = self.small_run(), self.small_run()
        np.testing.assert_array_equal(a.mirrors, b.mirrors)
        assert a.selected_units == b.selected_units
        assert a.thresholds == b.thresholds

    def test_report_shapes_and_unit_mapping(self):
        rep = self.small_run()
        J = rep.n_taxa
        assert rep.pd1.shape == rep.pd2.shape == rep.mirrors.shape == (3, 2, J)
        assert rep.inclusion_rates.shape == (2, J)
        for u in rep.selected_units:
            assert 0 <= u < 2 * J
        assert rep.selected_taxa == tuple(sorted({u % J for u in rep.selected_units}))
        for li, h in enumerate(rep.lags):
            per_lag = rep.selected_taxa_for_lag(h)
            assert per_lag == tuple(sorted(
                u - li * J for u in rep.selected_units
                if li * J <= u < (li + 1) * J))
        with pytest.raises(ValidationError):
            rep.selected_taxa_for_lag(9)

    def test_mirrors_consistent_with_pd(self):
        rep = self.small_run()
        np.testing.assert_array_equal(
            rep.mirrors, np.sign(rep.pd1 * rep.pd2) * (np.abs(rep.pd1) + np.abs(rep.pd2)))

    def test_single_split_path(self):
        rep = self.small_run(n_splits=1)
        assert rep.n_splits == 1
        assert rep.mirrors.shape[0] == 1
        sel = set(rep.selected_units)
        rates = rep.inclusion_rates.ravel()
        if sel:
            np.testing.assert_allclose(
                rates[sorted(sel)], 1.0 / len(sel), atol=1e-15)
        assert np.all(rates[[u for u in range(rates.size) if u not in sel]] == 0.0)

    def test_aggregation_matches_replay(self):
        rep = self.small_run(n_splits=4)
        sel, rates = multi_split_select(rep.per_split_units,
                                        len(rep.lags) * rep.n_taxa, rep.q)
        assert tuple(int(u) for u in sel) == rep.selected_units
        np.testing.assert_array_equal(rates.reshape(rep.inclusion_rates.shape),
                                      rep.inclusion_rates)

    def test_validation(self):
        sset = make_set(n_subjects=6, J=3, T=10)
        with pytest.raises(ValidationError):
            select_taxa(sset, np.ones(1), np.zeros(1), recipe(), lags=())
        with pytest.raises(ValidationError):
            select_taxa(sset, np.ones(1), np.zeros(1), recipe(), lags=(-1,))
        with pytest.raises(ValidationError):
            select_taxa(sset, np.ones(1), np.zeros(1), recipe(), q=1.5)

    def test_exports(self, tmp_path):
        rep = self.small_run()
        mpath, spath, jpath = (tmp_path / n for n in
                               ("mirrors.csv", "selection.csv", "meta.json"))
        rep.export_mirrors_csv(mpath)
        rep.export_selection_csv(spath)
        rep.export_metadata_json(jpath, extra={"note": "x"})
        mlines = mpath.read_text().splitlines()
        assert mlines[0] == "split,taxon,lag,pd1,pd2,m"
        assert len(mlines) == 1 + rep.n_splits * len(rep.lags) * rep.n_taxa
        slines = spath.read_text().splitlines()
        assert slines[0] == "taxon,lag,inclusion_rate,selected"
        assert len(slines) == 1 + len(rep.lags) * rep.n_taxa
        import json
        meta = json.loads(jpath.read_text())
        assert meta["note"] == "x"
        assert meta["q"] == rep.q and meta["n_splits"] == rep.n_splits
