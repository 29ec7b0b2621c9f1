"""Kinematic signals derived from stroke samples: speed, acceleration, smoothing."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import PipelineError
from .ink import CHANNELS, DEFAULT_SAMPLE_RATE_HZ, T, Stroke

DEFAULT_SMOOTH_SIGMA = 2.0
KERNEL_TRUNCATE = 4.0
REGULARIZE_TOLERANCE = 0.10


@dataclass(frozen=True, eq=False)
class KinematicSeries:
    """
    Per-sample signals on a common time base.

    `accel` is only present on series produced by accel_profile; channels are
    optional so that bare speed profiles (e.g. synthesized ones) can be fitted.
    """

    t: np.ndarray
    speed: np.ndarray
    accel: Optional[np.ndarray] = None
    pressure: Optional[np.ndarray] = None
    tilt_x: Optional[np.ndarray] = None
    tilt_y: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.t)
        for name in ("t", "speed", "accel", "pressure", "tilt_x", "tilt_y"):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.asarray(value, dtype=float)
            if value.shape != (n,):
                raise PipelineError(f"{name}: length {value.shape} differs from t ({n})")
            object.__setattr__(self, name, value)
        if np.any(self.speed < 0):
            raise PipelineError("speed: negative value")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0

    def shifted(self, dt: float) -> "KinematicSeries":
        return KinematicSeries(
            t=self.t + dt,
            speed=self.speed,
            accel=self.accel,
            pressure=self.pressure,
            tilt_x=self.tilt_x,
            tilt_y=self.tilt_y,
        )

    def scaled(self, k: float) -> "KinematicSeries":
        return KinematicSeries(
            t=self.t,
            speed=self.speed * k,
            accel=None if self.accel is None else self.accel * k,
            pressure=self.pressure,
            tilt_x=self.tilt_x,
            tilt_y=self.tilt_y,
        )


def _midpoints(values: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if values is None:
        return None
    return 0.5 * (values[1:] + values[:-1])


def speed_profile(stroke: Stroke) -> KinematicSeries:
    """
    Writing-plane speed between consecutive samples of a stroke.

    Each value is stamped at the midpoint of its two samples; pressure and tilt
    are averaged onto the same midpoints.
    """
    t = stroke.t
    dt = np.diff(t)
    distance = np.hypot(*np.diff(stroke.xy, axis=0).T)
    return KinematicSeries(
        t=_midpoints(t),
        speed=distance / dt,
        pressure=_midpoints(stroke.pressure),
        tilt_x=_midpoints(stroke.tilt_x),
        tilt_y=_midpoints(stroke.tilt_y),
    )


def accel_profile(series: KinematicSeries) -> KinematicSeries:
    """
    Finite-difference acceleration of a speed series, midpoint-stamped.

    Raises:
        PipelineError: If the series has fewer than 2 samples
    """
    if len(series) < 2:
        raise PipelineError("insufficient samples")
    accel = np.diff(series.speed) / np.diff(series.t)
    return KinematicSeries(
        t=_midpoints(series.t),
        speed=_midpoints(series.speed),
        accel=accel,
        pressure=_midpoints(series.pressure),
        tilt_x=_midpoints(series.tilt_x),
        tilt_y=_midpoints(series.tilt_y),
    )


def smooth(values, sigma_samples: float = DEFAULT_SMOOTH_SIGMA) -> np.ndarray:
    """
    Gaussian smoothing truncated at 4 sigma.

    Near the edges the kernel is renormalized over the samples that exist, so
    constant signals pass unchanged and the operator stays linear.

    Args:
        values: Signal samples
        sigma_samples: Kernel standard deviation in samples

    Returns:
        Smoothed signal of the same length
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise PipelineError("cannot smooth an empty signal")
    if not sigma_samples > 0:
        raise PipelineError(f"sigma_samples must be positive, got {sigma_samples}")
    weighted = gaussian_filter1d(values, sigma_samples, mode="constant", cval=0.0, truncate=KERNEL_TRUNCATE)
    norm = gaussian_filter1d(np.ones_like(values), sigma_samples, mode="constant", cval=0.0, truncate=KERNEL_TRUNCATE)
    return weighted / norm


def regularize(stroke: Stroke, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> Stroke:
    """
    Resample a stroke onto a uniform grid when its timing is irregular.

    Strokes whose every sample interval lies within 10% of 1/sample_rate_hz are
    returned unchanged; otherwise all channels are linearly interpolated onto a
    grid with the nominal spacing starting at the first sample.
    """
    nominal = 1.0 / sample_rate_hz
    dt = np.diff(stroke.t)
    if np.all(np.abs(dt - nominal) <= REGULARIZE_TOLERANCE * nominal):
        return stroke
    t = stroke.t
    n = int(np.floor((t[-1] - t[0]) / nominal + 1e-9)) + 1
    if n >= 2:
        grid = t[0] + nominal * np.arange(n)
    else:
        grid = np.array([t[0], t[-1]])
    points = np.empty((len(grid), len(CHANNELS)))
    points[:, T] = grid
    for column in range(1, len(CHANNELS)):
        points[:, column] = np.interp(grid, t, stroke.points[:, column])
    return Stroke(points)
