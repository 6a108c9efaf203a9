import numpy as np
import pytest
from conftest import leaf, make_set, make_subject, stub_model

from transferfx import (DataError, EvalReport, InterventionSeriesSet,
                        SimConfig, ValidationError, carry_forward,
                        cv_forecast_eval, export_inference_csv,
                        fold_assignments, global_mean, inference_eval,
                        simulate, training_means)
from transferfx.evalbench import _truncated_mean


class TestFolds:
    def test_partition_and_balance(self):
        ids = [f"s{i}" for i in range(10)]
        folds = fold_assignments(ids, 4, seed=0)
        assert len(folds) == 4
        flat = [i for f in folds for i in f]
        assert sorted(flat) == sorted(ids)
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1

    def test_deterministic_and_seed_sensitive(self):
        ids = [f"s{i}" for i in range(8)]
        assert fold_assignments(ids, 4, seed=0) == fold_assignments(ids, 4, seed=0)
        assert any(fold_assignments(ids, 4, seed=0) != fold_assignments(ids, 4, seed=s)
                   for s in (1, 2, 3))

    def test_order_of_input_is_irrelevant(self):
        ids = [f"s{i}" for i in range(9)]
        a = fold_assignments(ids, 3, seed=5)
        b = fold_assignments(ids[::-1], 3, seed=5)
        assert a == b

    def test_bounds(self):
        ids = ["a", "b", "c"]
        with pytest.raises(ValidationError):
            fold_assignments(ids, 1)
        with pytest.raises(ValidationError):
            fold_assignments(ids, 4)


class TestBaselines:
    def test_carry_forward_oracle(self):
        subj = make_subject(J=2, T=6).truncated(3)
        out = carry_forward(subj, 4)
        assert out.shape == (2, 4)
        for h in range(4):
            np.testing.assert_array_equal(out[:, h], subj.abundances[:, -1])

    def test_global_mean_oracle(self):
        out = global_mean(np.array([1.5, -2.0]), 3)
        np.testing.assert_array_equal(out, [[1.5] * 3, [-2.0] * 3])

    def test_training_means_weight_by_cells(self):
        s1 = make_subject("a", J=2, T=4).truncated(2)
        s2 = make_subject("b", J=2, T=4)
        sset = InterventionSeriesSet((s1, s2), ("t0", "t1"), ("w0",), ("z0",),
                                     scale_tag="counts")
        expected = (s1.abundances.sum(axis=1) + s2.abundances.sum(axis=1)) / (2 + 4)
        np.testing.assert_allclose(training_means(sset), expected, rtol=1e-15)


class TestTruncatedMean:
    def test_outlier_dropped(self):
        errs = np.array([0.0, 0.0, 0.0, 0.0, 1000.0])
        assert _truncated_mean(errs) == 0.0

    def test_fence_is_inclusive(self):
        errs = np.array([0.0, 0.0, 0.0, 1000.0])  # Q3=250, fence=1000 -> kept
        assert _truncated_mean(errs) == 250.0

    def test_uniform_errors_unchanged(self):
        errs = np.full(10, 3.25)
        assert _truncated_mean(errs) == 3.25


def zero_recipe(P=1, Q=1):
    def fit(train):
        trees = [[leaf(0.0)] for _ in range(train.n_taxa)]
        return stub_model(train, P, Q, trees)
    return fit


class TestCvForecastEval:
    def test_mae_oracle_against_hand_computation(self):
        sset = make_set(n_subjects=4, J=2, T=8, onset=3, length=2)
        report = cv_forecast_eval(sset, zero_recipe(), n_folds=2, H=3, seed=0)
        folds = fold_assignments(sset.subject_ids, 2, seed=0)
        for k, hold_ids in enumerate(folds):
            train_ids = [i for i in sset.subject_ids if i not in set(hold_ids)]
            means = training_means(sset.restrict_subjects(train_ids))
            expected = {m: [] for m in ("transfer", "carry_forward", "global_mean")}
            for sid in hold_ids:
                s = sset.subject(sid)
                future = s.abundances[:, 4:7]          # t*=3, H_eff=3
                expected["transfer"].append(np.abs(future).ravel())
                carry = np.tile(s.abundances[:, 3:4], (1, 3))
                expected["carry_forward"].append(np.abs(carry - future).ravel())
                gm = np.tile(means[:, None], (1, 3))
                expected["global_mean"].append(np.abs(gm - future).ravel())
            for m, errs in expected.items():
                want = float(np.concatenate(errs).mean())
                assert report.mae(k, m) == pytest.approx(want, rel=1e-15)
        scored = [r["n_scored"] for r in report.rows]
        assert all(n == 2 * 2 * 3 for n in scored)     # 2 subjects x J=2 x H_eff=3

    def test_h_capped_by_series_end(self):
        sset = make_set(n_subjects=4, J=2, T=8, onset=3)
        report = cv_forecast_eval(sset, zero_recipe(), n_folds=2, H=50, seed=0)
        # t*=3 on every subject: H_eff = 8 - 1 - 3 = 4
        assert all(r["n_scored"] == 2 * 2 * 4 for r in report.rows)

    def test_recipe_never_sees_holdout(self):
        sset = make_set(n_subjects=6, J=2, T=8)
        folds = fold_assignments(sset.subject_ids, 3, seed=0)
        seen = []

        def spying(train):
            seen.append(tuple(train.subject_ids))
            return zero_recipe()(train)

        cv_forecast_eval(sset, spying, n_folds=3, H=2, seed=0)
        assert len(seen) == 3
        for hold_ids, train_ids in zip(folds, seen):
            assert not (set(hold_ids) & set(train_ids))
            assert set(hold_ids) | set(train_ids) == set(sset.subject_ids)

    def test_train_order_preserved(self):
        sset = make_set(n_subjects=6, J=2, T=8)
        seen = []

        def spying(train):
            seen.append(tuple(train.subject_ids))
            return zero_recipe()(train)

        cv_forecast_eval(sset, spying, n_folds=3, H=2, seed=0)
        order = {sid: i for i, sid in enumerate(sset.subject_ids)}
        for ids in seen:
            assert list(ids) == sorted(ids, key=order.get)

    def test_baselines_only_skip_fitting(self):
        sset = make_set(n_subjects=4, J=2, T=8)
        calls = []

        def recipe(train):
            calls.append(1)
            return zero_recipe()(train)

        report = cv_forecast_eval(sset, recipe, n_folds=2, H=2,
                                  methods=("carry_forward", "global_mean"))
        assert not calls
        assert {r["method"] for r in report.rows} == {"carry_forward", "global_mean"}

    def test_normalized_mode_runs_and_labels_rows(self):
        sset = make_set(n_subjects=4, J=3, T=8)
        report = cv_forecast_eval(sset, zero_recipe(), n_folds=2, H=2,
                                  normalization="size_factor_asinh")
        assert all(r["normalization"] == "size_factor_asinh" for r in report.rows)
        assert all(np.isfinite(r["mae"]) for r in report.rows)

    def test_onset_at_last_timepoint_rejected(self):
        sset = make_set(n_subjects=4, J=2, T=8, onset=7, length=1)
        with pytest.raises(DataError):
            cv_forecast_eval(sset, zero_recipe(), n_folds=2, H=3)

    def test_onset_too_early_for_lag_order(self):
        sset = make_set(n_subjects=4, J=2, T=8, onset=0, length=2)
        with pytest.raises(DataError):
            cv_forecast_eval(sset, zero_recipe(P=2, Q=1), n_folds=2, H=2)

    def test_validation(self):
        sset = make_set(n_subjects=4)
        with pytest.raises(ValidationError):
            cv_forecast_eval(sset, zero_recipe(), normalization="bogus")
        with pytest.raises(ValidationError):
            cv_forecast_eval(sset, zero_recipe(), H=0)
        with pytest.raises(ValidationError):
            cv_forecast_eval(sset, zero_recipe(), methods=("transfer", "oracle"))

    def test_transfer_row_includes_fit_time(self):
        sset = make_set(n_subjects=4, J=2, T=8)

        def slow_recipe(train):
            import time
            time.sleep(0.05)
            return zero_recipe()(train)

        report = cv_forecast_eval(sset, slow_recipe, n_folds=2, H=2)
        by_method = {}
        for r in report.rows:
            by_method.setdefault(r["method"], []).append(r["seconds"])
        assert min(by_method["transfer"]) >= 0.05
        assert max(by_method["carry_forward"]) < 0.05


class TestEvalReport:
    def test_lookup_and_export(self, tmp_path):
        rows = ({"fold": 0, "method": "transfer", "normalization": "none",
                 "mae": 1.25, "mae_truncated": 1.0, "n_scored": 10, "seconds": 0.5},)
        report = EvalReport(rows)
        assert report.mae(0, "transfer") == 1.25
        with pytest.raises(ValidationError):
            report.mae(1, "transfer")
        path = tmp_path / "eval.csv"
        report.export_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "fold,method,normalization,mae,mae_truncated,n_scored,seconds"
        assert lines[1] == "0,transfer,none,1.25,1,10,0.5"


class TestInferenceEval:
    def setup_method(self):
        _, self.truth = simulate(SimConfig(J=10, pi0=0.4, b=1.0,
                                           n_subjects=4, T=18, seed=0))
        # J1 = (0..5), J0 = (6..9); every nonnull has a nonzero B_0 row

    def test_counting_oracle(self):
        fdp, power = inference_eval({0, 1, 6}, self.truth, 0)
        assert fdp == pytest.approx(1 / 3)
        assert power == pytest.approx(2 / 6)

    def test_empty_selection(self):
        fdp, power = inference_eval(set(), self.truth, 0)
        assert (fdp, power) == (0.0, 0.0)

    def test_all_null_truth_has_zero_power(self):
        _, null_truth = simulate(SimConfig(J=6, pi0=1.0, b=1.0,
                                           n_subjects=4, T=18, seed=0))
        fdp, power = inference_eval({0, 1}, null_truth, 0)
        assert fdp == 1.0 and power == 0.0

    def test_export(self, tmp_path):
        path = tmp_path / "inference.csv"
        export_inference_csv([{"lag": 0, "fdp": 0.25, "power": 0.5,
                               "q": 0.2, "seed": 7}], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "lag,fdp,power,q,seed"
        lag, fdp, power, q, seed = lines[1].split(",")
        assert (int(lag), int(seed)) == (0, 7)
        # cells carry full float64 precision and parse back exactly
        assert (float(fdp), float(power), float(q)) == (0.25, 0.5, 0.2)
