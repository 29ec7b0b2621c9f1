"""Tests for speed, acceleration, smoothing and regularization."""
import numpy as np
import pytest

from siglog_cli.errors import PipelineError
from siglog_cli.kinematics import KinematicSeries, accel_profile, regularize, smooth, speed_profile

from .conftest import line_stroke, make_stroke


class TestSpeedProfile:
    def test_collinear_equal_steps(self):
        stroke = line_stroke(n=3, step=1.0, rate=480.0)
        series = speed_profile(stroke)
        np.testing.assert_allclose(series.speed, [480.0, 480.0])
        assert len(series) == len(stroke) - 1

    def test_midpoint_timestamps(self):
        series = speed_profile(make_stroke([0.0, 0.1, 0.3], [0.0, 1.0, 2.0]))
        np.testing.assert_allclose(series.t, [0.05, 0.2])
        np.testing.assert_allclose(series.speed, [10.0, 5.0])

    def test_translation_invariant_scale_equivariant(self):
        rng = np.random.default_rng(0)
        t = np.arange(30) / 480.0
        x, y = rng.normal(size=(2, 30)).cumsum(axis=1)
        base = speed_profile(make_stroke(t, x, y)).speed
        moved = speed_profile(make_stroke(t, x + 7.0, y - 3.0)).speed
        scaled = speed_profile(make_stroke(t, 2.5 * x, 2.5 * y)).speed
        np.testing.assert_allclose(moved, base, rtol=1e-12)
        np.testing.assert_allclose(scaled, 2.5 * base, rtol=1e-12)

    def test_channels_follow_midpoints(self):
        series = speed_profile(make_stroke([0.0, 0.1], [0.0, 1.0], pressure=[0.2, 0.4]))
        np.testing.assert_allclose(series.pressure, [0.3])


class TestAccelProfile:
    def test_constant_speed(self):
        series = KinematicSeries(t=np.array([0.0, 0.1, 0.2]), speed=np.array([5.0, 5.0, 5.0]))
        np.testing.assert_array_equal(accel_profile(series).accel, [0.0, 0.0])

    def test_linear_ramp(self):
        series = KinematicSeries(t=np.array([0.0, 0.1]), speed=np.array([0.0, 10.0]))
        np.testing.assert_allclose(accel_profile(series).accel, [100.0])

    def test_time_reversal_symmetry(self):
        rng = np.random.default_rng(4)
        t = np.cumsum(rng.uniform(0.001, 0.01, size=40))
        speed = rng.uniform(0.0, 10.0, size=40)
        forward = accel_profile(KinematicSeries(t=t, speed=speed)).accel
        reversed_series = KinematicSeries(t=-t[::-1], speed=speed[::-1])
        np.testing.assert_allclose(accel_profile(reversed_series).accel, -forward[::-1], rtol=1e-12)

    def test_insufficient_samples(self):
        with pytest.raises(PipelineError, match="insufficient samples"):
            accel_profile(KinematicSeries(t=np.array([0.0]), speed=np.array([1.0])))


class TestSmooth:
    def test_constant_unchanged(self):
        np.testing.assert_allclose(smooth(np.full(50, 3.7), 2.0), 3.7, atol=1e-12)

    def test_impulse_is_symmetric_bell(self):
        impulse = np.zeros(41)
        impulse[20] = 1.0
        out = smooth(impulse, 2.0)
        assert out.sum() == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(out, out[::-1], atol=1e-15)
        assert np.argmax(out) == 20

    def test_sine_attenuation_matches_gaussian_transfer(self):
        rate, freq, sigma = 480.0, 5.0, 3.0
        t = np.arange(960) / rate
        signal = np.sin(2 * np.pi * freq * t)
        out = smooth(signal, sigma)
        interior = slice(100, -100)
        gain = np.dot(out[interior], signal[interior]) / np.dot(signal[interior], signal[interior])
        expected = np.exp(-2 * np.pi**2 * freq**2 * (sigma / rate) ** 2)
        assert gain == pytest.approx(expected, rel=0.02)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        u, v = rng.normal(size=(2, 64))
        np.testing.assert_allclose(
            smooth(2.0 * u - 3.0 * v, 2.5),
            2.0 * smooth(u, 2.5) - 3.0 * smooth(v, 2.5),
            atol=1e-9,
        )

    def test_empty_input(self):
        with pytest.raises(PipelineError):
            smooth([], 2.0)

    def test_sigma_must_be_positive(self):
        with pytest.raises(PipelineError):
            smooth([1.0, 2.0], 0.0)


class TestRegularize:
    def test_uniform_stroke_unchanged(self):
        stroke = line_stroke(n=20)
        assert regularize(stroke) is stroke

    def test_irregular_stroke_resampled(self):
        t = np.array([0.0, 1.0, 3.0, 4.0, 6.0]) / 480.0
        stroke = make_stroke(t, t * 480.0)
        out = regularize(stroke)
        np.testing.assert_allclose(np.diff(out.t), 1.0 / 480.0)
        np.testing.assert_allclose(out.xy[:, 0], np.arange(7.0), atol=1e-9)
