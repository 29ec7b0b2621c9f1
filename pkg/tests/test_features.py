"""Tests for the basic, entropy and siglog feature families."""
import math

import numpy as np
import pandas as pd
import pytest

from siglog_cli.errors import FeatureError, FitError
from siglog_cli.features import (
    ID_COLUMNS,
    DrillFeatures,
    Family,
    FeatureSettings,
    aggregate_student,
    basic_drill_features,
    cohort_ranges,
    entropy_drill_features,
    feature_names,
    feature_table,
    fit_cohort,
    fits_by_drill,
    normalized_entropy,
    read_feature_table,
    siglog_drill_features,
    write_feature_table,
)
from siglog_cli.ink import Cohort, Drill
from siglog_cli.lognorm import FitConfig, FitResult, LognormalComponent
from siglog_cli.synth import MaturationProfile, generate_cohort, generate_stroke

from .conftest import line_stroke, make_stroke, make_student


@pytest.fixture(scope="module")
def small_cohort():
    cohort, _ = generate_cohort(MaturationProfile(), n_per_grade=2, drills_per_student=1, seed=5)
    return cohort


class TestNormalizedEntropy:
    def test_uniform_fill_is_one(self):
        values = np.repeat((np.arange(16) + 0.5) / 16, 5)
        assert normalized_entropy(values, 16, (0.0, 1.0)) == pytest.approx(1.0, abs=1e-9)

    def test_constant_is_zero(self):
        assert normalized_entropy(np.full(10, 2.5), 16) == 0.0

    def test_two_of_four_bins(self):
        assert normalized_entropy([0.0, 0.0, 1.0, 1.0], 4) == 0.5

    def test_always_in_unit_interval(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            values = rng.normal(size=rng.integers(1, 50)) * rng.uniform(0.1, 10)
            h = normalized_entropy(values, int(rng.integers(2, 40)))
            assert 0.0 <= h <= 1.0

    def test_empty_input(self):
        with pytest.raises(FeatureError):
            normalized_entropy([], 16)

    def test_fixed_range_clips(self):
        assert normalized_entropy([-5.0, 0.1, 0.9, 5.0], 2, (0.0, 1.0)) == pytest.approx(1.0)


class TestBasicFeatures:
    def test_two_strokes_pooled(self):
        drill = Drill(
            "d",
            (make_stroke([0.0, 1.0], [0.0, 2.0]), make_stroke([2.0, 3.0], [0.0, 4.0])),
            n_questions=4,
            n_correct=4,
        )
        values = basic_drill_features(drill).values
        assert values["mean_speed"] == pytest.approx(3.0)
        assert values["std_speed"] == pytest.approx(1.0)

    def test_constant_velocity_and_pressure(self):
        drill = Drill("d", (line_stroke(n=12, pressure=0.5),), n_questions=4, n_correct=1)
        values = basic_drill_features(drill).values
        assert values["std_speed"] == pytest.approx(0.0, abs=1e-9)
        assert values["mean_pressure"] == 0.5
        assert values["std_pressure"] == 0.0
        assert len(values) == 8


class TestEntropyFeatures:
    def test_constant_drill_has_zero_entropy(self):
        drill = Drill("d", (line_stroke(n=12),), n_questions=4, n_correct=1)
        values = entropy_drill_features(drill, 16).values
        assert values["h_norm_accel"] == 0.0
        assert values["h_norm_pressure"] == 0.0
        assert len(values) == 12

    def test_matches_entropy_of_pooled_channels(self):
        rng = np.random.default_rng(8)
        strokes = []
        for start in (0.0, 1.0):
            t = start + np.arange(20) / 480.0
            strokes.append(
                make_stroke(t, rng.uniform(0, 5, 20).cumsum(), pressure=rng.uniform(0.1, 0.9, 20))
            )
        drill = Drill("d", tuple(strokes), n_questions=4, n_correct=1)
        pooled = np.concatenate([s.pressure for s in strokes])

        values = entropy_drill_features(drill, 8).values

        assert values["h_norm_pressure"] == normalized_entropy(pooled, 8)
        assert values["mean_pressure"] == pytest.approx(pooled.mean())

    def test_needs_acceleration_samples(self):
        drill = Drill("d", (line_stroke(n=2),), n_questions=4, n_correct=1)
        with pytest.raises(FeatureError, match="no acceleration samples"):
            entropy_drill_features(drill)


class TestSiglogFeatures:
    @staticmethod
    def _fit(n_components, snr):
        components = tuple(LognormalComponent(0.05 * k, 2.0 + k, -1.8, 0.2 + 0.01 * k) for k in range(n_components))
        return FitResult(components=components, snr_db=snr)

    def test_component_counts(self):
        drill = Drill("d", (line_stroke(), line_stroke(start=1.0)), n_questions=4, n_correct=1)
        fits = [self._fit(1, 30.0), self._fit(3, 24.0)]

        values = siglog_drill_features(drill, fits=fits).values

        assert values["mean_C"] == 2.0
        assert values["std_C"] == 1.0
        assert values["mean_snr_over_c"] == pytest.approx((30.0 + 8.0) / 2)
        assert len(values) == 14

    def test_onsets_relative_to_stroke_start(self):
        drill = Drill("d", (line_stroke(start=2.0),), n_questions=4, n_correct=1)
        fit = FitResult(components=(LognormalComponent(2.1, 3.0, -1.8, 0.2),), snr_db=30.0)
        values = siglog_drill_features(drill, fits=[fit]).values
        assert values["mean_t0"] == pytest.approx(0.1)

    def test_unfittable_strokes_are_skipped(self):
        drill = Drill("d", (line_stroke(), line_stroke(start=1.0)), n_questions=4, n_correct=1)
        values = siglog_drill_features(drill, fits=[None, self._fit(2, 28.0)]).values
        assert values["mean_C"] == 2.0

    def test_no_fittable_strokes(self):
        drill = Drill("d", (line_stroke(n=3),), n_questions=4, n_correct=1)
        with pytest.raises(FitError, match="no fittable strokes"):
            siglog_drill_features(drill)

    def test_identical_strokes_have_zero_spread(self):
        stroke = generate_stroke([LognormalComponent(0.0, 8.0, -1.7, 0.25)], noise_amp=0.0, seed=0)
        drill = Drill("d", (stroke, stroke, stroke), n_questions=4, n_correct=1)
        values = siglog_drill_features(drill).values
        for name, value in values.items():
            if name.startswith("std_"):
                assert value == pytest.approx(0.0, abs=1e-3)

    def test_pooled_snr(self):
        stroke = generate_stroke([LognormalComponent(0.0, 8.0, -1.7, 0.25)], noise_amp=0.05, seed=3)
        drill = Drill("d", (stroke,), n_questions=4, n_correct=1)
        per_stroke = siglog_drill_features(drill, snr_aggregation="stroke").values
        pooled = siglog_drill_features(drill, snr_aggregation="drill").values
        assert pooled["mean_snr"] == pytest.approx(per_stroke["mean_snr"], abs=1e-6)

    def test_pooled_snr_has_no_spread(self):
        strokes = tuple(
            generate_stroke([LognormalComponent(0.0, 8.0, -1.7, 0.25)], noise_amp=0.05, seed=s) for s in (4, 5)
        )
        drill = Drill("d", strokes, n_questions=4, n_correct=1)
        values = siglog_drill_features(drill, snr_aggregation="drill").values
        assert values["std_snr"] == 0.0
        assert values["std_snr_over_c"] == 0.0
        assert values["mean_snr_over_c"] == pytest.approx(values["mean_snr"] / values["mean_C"])

    def test_pooled_snr_follows_fit_reference(self):
        stroke = generate_stroke([LognormalComponent(0.0, 8.0, -1.7, 0.25)], noise_amp=0.05, seed=3)
        drill = Drill("d", (stroke,), n_questions=4, n_correct=1)
        cfg = FitConfig(snr_reference="smoothed")
        per_stroke = siglog_drill_features(drill, cfg, snr_aggregation="stroke").values
        pooled = siglog_drill_features(drill, cfg, snr_aggregation="drill").values
        assert pooled["mean_snr"] == pytest.approx(per_stroke["mean_snr"], abs=1e-6)

    def test_unknown_aggregation(self):
        drill = Drill("d", (line_stroke(),), n_questions=4, n_correct=1)
        with pytest.raises(FeatureError):
            siglog_drill_features(drill, snr_aggregation="student", fits=[None])


class TestAggregation:
    def test_mean_and_sd(self):
        drills = [DrillFeatures(Family.BASIC, {"f": 1.0}), DrillFeatures(Family.BASIC, {"f": 3.0})]
        vector = aggregate_student(drills, "basic", "s1")
        assert vector.values == {"f_avg": 2.0, "f_sd": 1.0}

    def test_single_drill(self):
        vector = aggregate_student([DrillFeatures(Family.ENTROPY, {"f": 4.0})], Family.ENTROPY)
        assert vector.values == {"f_avg": 4.0, "f_sd": 0.0}

    def test_siglog_mean_only(self):
        drills = [DrillFeatures(Family.SIGLOG, {"f": 1.0}), DrillFeatures(Family.SIGLOG, {"f": 2.0})]
        assert aggregate_student(drills, "siglog").values == {"f_avg": 1.5}

    def test_family_mismatch(self):
        with pytest.raises(FeatureError, match="mismatch"):
            aggregate_student([DrillFeatures(Family.BASIC, {"f": 1.0})], "siglog")

    def test_non_finite_rejected(self):
        with pytest.raises(FeatureError, match="non-finite"):
            DrillFeatures(Family.BASIC, {"f": math.nan})

    @pytest.mark.parametrize("family, count", [("basic", 16), ("entropy", 24), ("siglog", 14)])
    def test_feature_counts(self, family, count):
        assert len(feature_names(family)) == count


class TestFeatureTable:
    def test_basic_table(self, small_cohort, tmp_path):
        table = feature_table(small_cohort, FeatureSettings(family=Family.BASIC))

        assert list(table.columns) == ID_COLUMNS + feature_names("basic")
        assert len(table) == len(small_cohort)
        assert table[feature_names("basic")].notna().all().all()

        path = tmp_path / "features_basic.csv"
        write_feature_table(table, path)
        pd.testing.assert_frame_equal(read_feature_table(path), table, check_exact=False, rtol=1e-12)

    def test_cohort_binning_uses_shared_ranges(self, small_cohort):
        ranges = cohort_ranges(small_cohort)
        assert set(ranges) == {"accel", "pressure", "tilt_x", "tilt_y"}
        table = feature_table(small_cohort, FeatureSettings(family=Family.ENTROPY, entropy_binning="cohort"))
        assert table["h_norm_pressure_avg"].between(0.0, 1.0).all()

    def test_siglog_reuses_fit_results(self, small_cohort):
        settings = FeatureSettings(family=Family.SIGLOG)
        records = fit_cohort(small_cohort)
        reused = feature_table(small_cohort, settings, fits=fits_by_drill(records))
        fresh = feature_table(small_cohort, settings)
        pd.testing.assert_frame_equal(reused, fresh, check_exact=False, rtol=1e-9)

    def test_worker_count_does_not_change_results(self, small_cohort):
        assert fit_cohort(small_cohort, threads=2) == fit_cohort(small_cohort)
        settings = FeatureSettings(family=Family.BASIC)
        pd.testing.assert_frame_equal(
            feature_table(small_cohort, settings, threads=2), feature_table(small_cohort, settings)
        )

    def test_fit_records_mark_failures(self):
        drill = Drill("d1", (line_stroke(n=3), line_stroke(n=60, start=1.0)), n_questions=4, n_correct=1)
        cohort = Cohort(students=(make_student("s1", drills=[drill]),))

        records = fit_cohort(cohort)
        grouped = fits_by_drill(records)

        assert "error" in records[0]
        assert grouped["s1"]["d1"][0] is None

    def test_missing_id_columns(self, tmp_path):
        path = tmp_path / "features_basic.csv"
        pd.DataFrame({"student_id": ["a"], "x": [1.0]}).to_csv(path, index=False)
        with pytest.raises(FeatureError, match="missing columns"):
            read_feature_table(path)
