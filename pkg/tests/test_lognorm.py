"""Tests for lognormal primitives, closed-form inversions and greedy extraction."""
import math

import numpy as np
import pytest
from scipy.integrate import quad

from siglog_cli.errors import ConfigError, FitError
from siglog_cli.kinematics import KinematicSeries, regularize, speed_profile
from siglog_cli.lognorm import (
    FitConfig,
    FitResult,
    LognormalComponent,
    extract,
    fit_stroke,
    inflection_estimate,
    lognormal_speed,
    read_fit_results,
    snr_db,
    synthesize,
    three_point_estimate,
    write_fit_results,
)
from siglog_cli.synth import generate_stroke

RATE = 480.0


def series_for(components, duration=0.8, start=0.0):
    t = start + np.arange(int(duration * RATE)) / RATE
    return KinematicSeries(t=t, speed=synthesize(components, t))


def characteristic_times(c, alpha=0.5):
    beta = math.sqrt(2.0 * math.log(1.0 / alpha))
    scale = math.exp(c.mu - c.sigma**2)
    return (
        c.t0 + scale * math.exp(-beta * c.sigma),
        c.t_mode,
        c.t0 + scale * math.exp(beta * c.sigma),
    )


class TestComponent:
    def test_zero_before_onset(self):
        c = LognormalComponent(t0=0.1, D=5.0, mu=-1.0, sigma=0.3)
        assert lognormal_speed(c, 0.1) == 0.0
        assert lognormal_speed(c, 0.05) == 0.0

    def test_peak_location(self):
        c = LognormalComponent(t0=0.0, D=1.0, mu=-1.0, sigma=0.3)
        t = np.linspace(0.001, 1.0, 200001)
        numeric = t[np.argmax(lognormal_speed(c, t))]
        assert c.t_mode == pytest.approx(0.33622, abs=1e-5)
        assert numeric == pytest.approx(c.t_mode, abs=1e-5)

    def test_peak_speed(self):
        c = LognormalComponent(t0=0.02, D=7.0, mu=-1.4, sigma=0.25)
        assert lognormal_speed(c, c.t_mode) == pytest.approx(c.peak_speed, rel=1e-12)

    def test_integral_equals_amplitude(self):
        c = LognormalComponent(t0=0.05, D=8.0, mu=-1.2, sigma=0.4)
        area, _ = quad(lambda x: lognormal_speed(c, x), c.t0, c.t0 + 10.0, points=[c.t_mode], limit=200)
        assert area == pytest.approx(8.0, rel=1e-4)

    @pytest.mark.parametrize("kwargs", [{"sigma": 0.0}, {"D": -1.0}, {"mu": float("nan")}])
    def test_invalid_parameters(self, kwargs):
        params = {"t0": 0.0, "D": 1.0, "mu": -1.0, "sigma": 0.3, **kwargs}
        with pytest.raises(FitError):
            LognormalComponent(**params)

    def test_synthesize_is_pointwise_sum(self):
        a = LognormalComponent(0.0, 3.0, -1.5, 0.3)
        b = LognormalComponent(0.1, 2.0, -1.7, 0.2)
        t = np.linspace(0, 1, 101)
        np.testing.assert_allclose(synthesize([a, b], t), lognormal_speed(a, t) + lognormal_speed(b, t))
        np.testing.assert_array_equal(synthesize([], t), np.zeros_like(t))


class TestSnr:
    def test_perfect_reconstruction_is_clamped(self):
        x = np.array([1.0, 2.0, 3.0])
        assert snr_db(x, x) == 100.0

    def test_silent_signal(self):
        assert snr_db(np.zeros(4), np.ones(4)) == 0.0

    def test_known_ratio(self):
        observed = np.array([1.0, 1.0, 1.0, 1.0])
        assert snr_db(observed, observed * 0.9) == pytest.approx(20.0)

    def test_length_mismatch(self):
        with pytest.raises(FitError, match="length"):
            snr_db([1.0, 2.0], [1.0])


class TestClosedForm:
    @pytest.mark.parametrize(
        "component",
        [
            LognormalComponent(0.0, 10.0, -1.5, 0.25),
            LognormalComponent(12.3, 4.0, -2.2, 0.12),
            LognormalComponent(0.4, 30.0, -0.8, 0.6),
        ],
    )
    @pytest.mark.parametrize("alpha", [0.5, 0.3])
    def test_three_point_is_exact(self, component, alpha):
        t_left, t_mode, t_right = characteristic_times(component, alpha)
        estimate = three_point_estimate(t_left, t_mode, t_right, component.peak_speed, alpha)
        for name in ("t0", "D", "mu", "sigma"):
            assert getattr(estimate, name) == pytest.approx(getattr(component, name), rel=1e-6, abs=1e-9)

    def test_three_point_degenerate(self):
        with pytest.raises(FitError, match="degenerate characteristic points"):
            three_point_estimate(0.1, 0.2, 0.3, 1.0)
        with pytest.raises(FitError, match="degenerate characteristic points"):
            three_point_estimate(0.3, 0.2, 0.4, 1.0)

    @staticmethod
    def _inflections(c):
        root = c.sigma * math.sqrt(0.25 * c.sigma**2 + 1.0)
        scale = math.exp(c.mu - c.sigma**2)
        points = []
        for w in (-0.5 * c.sigma**2 - root, -0.5 * c.sigma**2 + root):
            t = c.t0 + scale * math.exp(w)
            points.append((t, lognormal_speed(c, t)))
        return points

    def test_inflection_pair(self):
        c = LognormalComponent(0.1, 6.0, -1.6, 0.35)
        left, right = self._inflections(c)
        estimate = inflection_estimate(c.t_mode, c.peak_speed, left=left, right=right)
        for name in ("t0", "D", "mu", "sigma"):
            assert getattr(estimate, name) == pytest.approx(getattr(c, name), rel=1e-6)

    @pytest.mark.parametrize("side", ["left", "right"])
    def test_single_inflection(self, side):
        c = LognormalComponent(0.2, 5.0, -1.8, 0.3)
        left, right = self._inflections(c)
        point = {"left": left, "right": right}[side]
        estimate = inflection_estimate(c.t_mode, c.peak_speed, **{side: point})
        assert estimate.sigma == pytest.approx(c.sigma, rel=1e-6)
        assert estimate.t0 == pytest.approx(c.t0, rel=1e-6)

    def test_single_inflection_with_crossing_anchor(self):
        c = LognormalComponent(0.2, 5.0, -1.8, 0.3)
        _, right = self._inflections(c)
        t_left, _, _ = characteristic_times(c)
        beta = math.sqrt(2.0 * math.log(2.0))
        estimate = inflection_estimate(c.t_mode, c.peak_speed, right=right, anchor=(t_left, -beta))
        assert estimate.t0 == pytest.approx(c.t0, rel=1e-6)
        assert estimate.mu == pytest.approx(c.mu, rel=1e-6)

    def test_inflection_needs_a_point(self):
        with pytest.raises(FitError, match="degenerate characteristic points"):
            inflection_estimate(0.3, 1.0)


class TestExtract:
    def test_single_noiseless_component(self):
        truth = LognormalComponent(t0=0.05, D=10.0, mu=-1.5, sigma=0.25)
        result = extract(series_for([truth]))

        assert result.n_components == 1
        assert result.snr_db >= 40.0
        fitted = result.components[0]
        for name in ("t0", "D", "mu", "sigma"):
            assert getattr(fitted, name) == pytest.approx(getattr(truth, name), rel=0.02)

    def test_three_separated_components(self):
        truth = [
            LognormalComponent(0.00, 4.0, -2.3, 0.15),
            LognormalComponent(0.15, 5.0, -2.3, 0.15),
            LognormalComponent(0.30, 4.5, -2.3, 0.15),
        ]
        result = extract(series_for(truth, duration=0.7))

        assert result.n_components in (3, 4)
        assert result.snr_db >= 25.0

    def test_components_sorted_by_onset(self):
        truth = [LognormalComponent(0.25, 6.0, -2.3, 0.15), LognormalComponent(0.0, 3.0, -2.3, 0.15)]
        result = extract(series_for(truth, duration=0.6))
        onsets = [c.t0 for c in result.components]
        assert onsets == sorted(onsets)

    def test_overlapping_components_reach_target(self):
        truth = [LognormalComponent(0.0, 6.0, -1.9, 0.25), LognormalComponent(0.07, 4.0, -1.9, 0.25)]
        result = extract(series_for(truth, duration=0.8))
        assert result.snr_db >= 25.0
        assert result.n_components <= 4

    def test_white_noise_terminates(self):
        rng = np.random.default_rng(11)
        t = np.arange(240) / RATE
        cfg = FitConfig(max_components=6)
        result = extract(KinematicSeries(t=t, speed=np.abs(rng.normal(size=240))), cfg)
        assert result.n_components <= cfg.max_components

    def test_silent_stroke_has_no_components(self):
        t = np.arange(50) / RATE
        result = extract(KinematicSeries(t=t, speed=np.zeros(50)))
        assert result.n_components == 0
        assert result.snr_db == 0.0
        assert result.snr_over_c == 0.0

    def test_time_shift_equivariance(self):
        truth = LognormalComponent(t0=0.05, D=10.0, mu=-1.5, sigma=0.25)
        series = series_for([truth])
        base = extract(series).components[0]
        moved = extract(series.shifted(0.2)).components[0]

        assert moved.t0 - base.t0 == pytest.approx(0.2, abs=1e-4)
        for name in ("D", "mu", "sigma"):
            assert getattr(moved, name) == pytest.approx(getattr(base, name), rel=1e-3)

    def test_too_short(self):
        t = np.arange(5) / RATE
        with pytest.raises(FitError, match="too short"):
            extract(KinematicSeries(t=t, speed=np.ones(5)))

    def test_smoothed_reference(self):
        truth = LognormalComponent(t0=0.05, D=10.0, mu=-1.5, sigma=0.25)
        result = extract(series_for([truth]), FitConfig(snr_reference="smoothed"))
        assert result.n_components >= 1
        assert result.snr_db > 20.0


def random_component(rng, t0_high=0.1):
    return LognormalComponent(
        t0=float(rng.uniform(0.0, t0_high)),
        D=float(rng.uniform(2.0, 20.0)),
        mu=float(rng.uniform(-2.2, -1.2)),
        sigma=float(rng.uniform(0.15, 0.45)),
    )


class TestRandomizedRecovery:
    def test_three_point_on_random_components(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            c = LognormalComponent(
                t0=float(rng.uniform(0.0, 20.0)),
                D=float(rng.uniform(0.5, 50.0)),
                mu=float(rng.uniform(-3.0, 0.0)),
                sigma=float(rng.uniform(0.08, 0.9)),
            )
            alpha = float(rng.uniform(0.2, 0.8))
            t_left, t_mode, t_right = characteristic_times(c, alpha)
            estimate = three_point_estimate(t_left, t_mode, t_right, c.peak_speed, alpha)
            for name in ("t0", "D", "mu", "sigma"):
                assert getattr(estimate, name) == pytest.approx(getattr(c, name), rel=1e-6, abs=1e-9)

    @pytest.mark.slow
    def test_single_component_recovery(self):
        rng = np.random.default_rng(7)
        misses = 0
        for _ in range(1000):
            truth = random_component(rng)
            duration = truth.t0 + math.exp(truth.mu + 3.5 * truth.sigma) + 0.05
            result = extract(series_for([truth], duration=duration))
            fitted = result.components[0] if result.components else None
            ok = (
                fitted is not None
                and result.snr_db >= 40.0
                and abs(fitted.t0 - truth.t0) <= 0.02 * math.exp(truth.mu)
                and all(
                    abs(getattr(fitted, name) - getattr(truth, name)) <= 0.02 * abs(getattr(truth, name))
                    for name in ("D", "mu", "sigma")
                )
            )
            misses += not ok
        assert misses <= 10

    @pytest.mark.slow
    def test_three_component_strokes(self):
        rng = np.random.default_rng(8)
        good = kept = 0
        while kept < 200:
            onsets = 0.02 + np.cumsum([0.0, *rng.uniform(0.06, 0.16, size=2)])
            truth = [
                LognormalComponent(
                    t0=float(t0),
                    D=float(rng.uniform(1.0, 20.0)),
                    mu=float(rng.uniform(-2.5, -1.5)),
                    sigma=float(rng.uniform(0.1, 0.4)),
                )
                for t0 in onsets
            ]
            modes = sorted(c.t_mode for c in truth)
            if min(np.diff(modes)) < 0.06:
                continue
            kept += 1
            duration = max(c.t0 + math.exp(c.mu + 3.0 * c.sigma) for c in truth) + 0.05
            result = extract(series_for(truth, duration=duration))
            good += result.snr_db >= 25.0 and result.n_components in (3, 4)
        assert good >= 190

    def test_amplitude_equivariance(self):
        truth = [LognormalComponent(0.0, 4.0, -2.3, 0.15), LognormalComponent(0.12, 5.0, -2.0, 0.2)]
        series = series_for(truth, duration=0.7)
        base = extract(series)
        louder = extract(series.scaled(3.0))

        assert louder.n_components == base.n_components
        assert louder.snr_db == pytest.approx(base.snr_db, abs=1e-4)
        for a, b in zip(base.components, louder.components):
            assert b.D == pytest.approx(3.0 * a.D, rel=1e-4)
            for name in ("t0", "mu", "sigma"):
                assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-4, abs=1e-6)

    @pytest.mark.parametrize("seed", range(3))
    def test_snr_never_drops_as_components_are_added(self, seed):
        components = [LognormalComponent(0.0, 6.0, -1.9, 0.25), LognormalComponent(0.12, 5.0, -1.9, 0.25)]
        series = speed_profile(regularize(generate_stroke(components, noise_amp=0.05, seed=seed)))
        snrs = [
            extract(series, FitConfig(snr_target_db=99.0, max_components=k)).snr_db for k in range(1, 7)
        ]
        assert snrs == sorted(snrs)
        assert snrs[0] > 0.0


class TestFitConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": 1.0},
            {"snr_target_db": 0.0},
            {"max_components": 0},
            {"smooth_sigma": 0.0},
            {"snr_reference": "filtered"},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            FitConfig(**kwargs)


class TestStrokeFitting:
    def test_fit_synthetic_stroke(self):
        components = [LognormalComponent(0.0, 6.0, -1.9, 0.25), LognormalComponent(0.12, 5.0, -1.9, 0.25)]
        stroke = generate_stroke(components, noise_amp=0.0, seed=1)
        result = fit_stroke(stroke)
        assert result.n_components >= 1
        assert result.snr_db >= 25.0

    def test_results_file(self, tmp_path):
        result = FitResult(components=(LognormalComponent(0.0, 2.0, -1.5, 0.3),), snr_db=31.5)
        path = tmp_path / "fits.jsonl"
        write_fit_results([result.to_record(student_id="s1", drill_id="d1", stroke=0)], path)

        records = read_fit_results(path)

        assert records[0]["student_id"] == "s1"
        assert FitResult.from_record(records[0]) == result
