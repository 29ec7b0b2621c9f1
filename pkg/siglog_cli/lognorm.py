"""
Sigma-lognormal modelling of stroke speed profiles.

A stroke's speed is modelled as a sum of lognormal pulses

    v(t) = D / (sigma * sqrt(2 pi) * (t - t0)) * exp(-(ln(t - t0) - mu)^2 / (2 sigma^2))

for t > t0. Components are extracted greedily: the largest residual peak is
characterized from its half-peak crossings (or its inflection points when a
crossing is hidden by a neighbour), refined by bounded least squares alone
and jointly with the components it overlaps, then subtracted.
"""
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from .errors import ConfigError, FitError
from .ink import DEFAULT_SAMPLE_RATE_HZ, Stroke
from .kinematics import DEFAULT_SMOOTH_SIGMA, KinematicSeries, regularize, smooth, speed_profile

SQRT_2PI = math.sqrt(2.0 * math.pi)

SNR_CLAMP_DB = 100.0
SNR_FLOOR_RATIO = 1e-20
RESIDUAL_CLAMP = 0.05
MIN_FIT_SAMPLES = 8
MIN_FIT_DURATION = 0.010
PEAK_FLOOR = 1e-12
REFINE_XTOL = 1e-6
REFINE_MAX_ITERATIONS = 200


@dataclass(frozen=True)
class LognormalComponent:
    """One motor impulse: onset t0 (s), amplitude D, log-time location mu and scale sigma."""

    t0: float
    D: float
    mu: float
    sigma: float

    def __post_init__(self):
        values = (self.t0, self.D, self.mu, self.sigma)
        if not all(math.isfinite(v) for v in values):
            raise FitError(f"non-finite lognormal parameters {values}")
        if self.sigma <= 0:
            raise FitError(f"sigma must be positive, got {self.sigma}")
        if self.D <= 0:
            raise FitError(f"D must be positive, got {self.D}")

    @property
    def t_mode(self) -> float:
        return self.t0 + math.exp(self.mu - self.sigma**2)

    @property
    def peak_speed(self) -> float:
        return self.D * math.exp(-self.mu + 0.5 * self.sigma**2) / (self.sigma * SQRT_2PI)

    def shifted(self, dt: float) -> "LognormalComponent":
        return LognormalComponent(self.t0 + dt, self.D, self.mu, self.sigma)

    def to_dict(self) -> dict:
        return {"t0": self.t0, "D": self.D, "mu": self.mu, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, data: dict) -> "LognormalComponent":
        return cls(t0=float(data["t0"]), D=float(data["D"]), mu=float(data["mu"]), sigma=float(data["sigma"]))


@dataclass(frozen=True)
class FitResult:
    components: tuple[LognormalComponent, ...]
    snr_db: float

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def snr_over_c(self) -> float:
        return self.snr_db / max(self.n_components, 1)

    def to_record(self, **ids) -> dict:
        """Line-delimited record for the fit results file."""
        record = dict(ids)
        record.update(
            {
                "snr_db": self.snr_db,
                "n_components": self.n_components,
                "components": [c.to_dict() for c in self.components],
            }
        )
        return record

    @classmethod
    def from_record(cls, record: dict) -> "FitResult":
        return cls(
            components=tuple(LognormalComponent.from_dict(c) for c in record["components"]),
            snr_db=float(record["snr_db"]),
        )


@dataclass(frozen=True)
class FitConfig:
    snr_target_db: float = 25.0
    max_components: int = 20
    alpha: float = 0.5
    min_gain_db: float = 0.5
    refine: bool = True
    smooth_sigma: float = DEFAULT_SMOOTH_SIGMA
    # "raw" scores the reconstruction against the measured speed, "smoothed"
    # against its Gaussian-smoothed version
    snr_reference: str = "raw"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.snr_target_db > 0:
            raise ConfigError(f"snr_target_db must be positive, got {self.snr_target_db}")
        if self.max_components < 1:
            raise ConfigError(f"max_components must be >= 1, got {self.max_components}")
        if not self.smooth_sigma > 0:
            raise ConfigError(f"smooth_sigma must be positive, got {self.smooth_sigma}")
        if self.snr_reference not in ("raw", "smoothed"):
            raise ConfigError(f"snr_reference must be 'raw' or 'smoothed', got {self.snr_reference!r}")


def _speed(t: np.ndarray, t0: float, D: float, mu: float, sigma: float) -> np.ndarray:
    out = np.zeros_like(t)
    dt = t - t0
    inside = dt > 0
    log_dt = np.log(dt[inside])
    out[inside] = D / (sigma * SQRT_2PI * dt[inside]) * np.exp(-((log_dt - mu) ** 2) / (2.0 * sigma**2))
    return out


def lognormal_speed(c: LognormalComponent, t):
    """Speed of one component at time(s) t; zero for t <= t0."""
    t_arr = np.asarray(t, dtype=float)
    values = _speed(np.atleast_1d(t_arr), c.t0, c.D, c.mu, c.sigma)
    if t_arr.ndim == 0:
        return float(values[0])
    return values


def synthesize(components: Iterable[LognormalComponent], t_grid) -> np.ndarray:
    """Pointwise sum of component speeds on a time grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    total = np.zeros_like(t_grid)
    for c in components:
        total += _speed(t_grid, c.t0, c.D, c.mu, c.sigma)
    return total


def snr_db(observed, reconstructed) -> float:
    """
    Reconstruction signal-to-noise ratio in dB.

    Clamped to +100 dB for (near) perfect reconstruction; 0 dB when the
    observed signal has no energy.
    """
    observed = np.asarray(observed, dtype=float)
    reconstructed = np.asarray(reconstructed, dtype=float)
    if observed.shape != reconstructed.shape:
        raise FitError(f"length mismatch: {observed.shape} vs {reconstructed.shape}")
    if observed.size == 0:
        raise FitError("cannot compute SNR of an empty signal")
    signal = float(np.sum(observed**2))
    if signal == 0.0:
        return 0.0
    noise = float(np.sum((observed - reconstructed) ** 2))
    if noise < SNR_FLOOR_RATIO * signal:
        return SNR_CLAMP_DB
    return min(SNR_CLAMP_DB, 10.0 * math.log10(signal / noise))


# ---------------------------------------------------------------------------
# Closed-form characterization
# ---------------------------------------------------------------------------


def _component_from_scale(sigma: float, t_mode: float, v_max: float, scale: float) -> LognormalComponent:
    # scale = t_mode - t0 = exp(mu - sigma^2)
    if not (scale > 0 and sigma > 0 and v_max > 0):
        raise FitError("degenerate characteristic points")
    mu = math.log(scale) + sigma**2
    D = v_max * sigma * SQRT_2PI * math.exp(mu - 0.5 * sigma**2)
    return LognormalComponent(t0=t_mode - scale, D=D, mu=mu, sigma=sigma)


def three_point_estimate(
    t_left: float, t_mode: float, t_right: float, v_max: float, alpha: float = 0.5
) -> LognormalComponent:
    """
    Invert a lognormal from its mode and the two times where it crosses alpha * v_max.

    Exact for a noiseless isolated component.

    Raises:
        FitError: "degenerate characteristic points" when the geometry admits no lognormal
    """
    if not (t_left < t_mode < t_right) or not v_max > 0 or not 0 < alpha < 1:
        raise FitError("degenerate characteristic points")
    beta = math.sqrt(2.0 * math.log(1.0 / alpha))
    # Work relative to the mode to avoid cancellation at large absolute times
    a = t_left - t_mode
    b = t_right - t_mode
    denom = a + b
    if denom <= 1e-12 * (b - a):
        raise FitError("degenerate characteristic points")
    t0 = t_mode + a * b / denom
    if t0 >= t_left:
        raise FitError("degenerate characteristic points")
    sigma = math.log((t_right - t0) / (t_mode - t0)) / beta
    if not sigma > 0:
        raise FitError("degenerate characteristic points")
    return _component_from_scale(sigma, t_mode, v_max, t_mode - t0)


def _inflection_offsets(sigma: float) -> tuple[float, float]:
    # log-time offsets of the two inflection points from the mode
    root = sigma * math.sqrt(0.25 * sigma**2 + 1.0)
    return -0.5 * sigma**2 - root, -0.5 * sigma**2 + root


def inflection_estimate(
    t_mode: float,
    v_max: float,
    left: Optional[tuple[float, float]] = None,
    right: Optional[tuple[float, float]] = None,
    anchor: Optional[tuple[float, float]] = None,
) -> LognormalComponent:
    """
    Invert a lognormal from its mode and one or both inflection points.

    The relative speed at an inflection point depends on sigma alone, so sigma
    follows in closed form; the time offset of a second characteristic point
    then fixes t0.

    Args:
        t_mode: Time of the peak
        v_max: Peak speed
        left: (time, speed) of the rising inflection point, if visible
        right: (time, speed) of the falling inflection point, if visible
        anchor: A visible alpha crossing as (time, signed multiple of sigma of
            its log-time offset); fixes t0 when only one inflection is given

    Raises:
        FitError: "degenerate characteristic points"
    """
    if left is not None and right is not None:
        (t_l, v_l), (t_r, v_r) = left, right
        if not (t_l < t_mode < t_r and 0 < v_l < v_r):
            raise FitError("degenerate characteristic points")
        spread = math.log(v_r / v_l)  # = sigma * sqrt(sigma^2 / 4 + 1)
        sigma = math.sqrt(2.0 * (math.sqrt(1.0 + spread**2) - 1.0))
        a, b = _inflection_offsets(sigma)
        scale = (t_r - t_l) / (math.exp(b) - math.exp(a))
        return _component_from_scale(sigma, t_mode, v_max, scale)

    if left is None and right is None:
        raise FitError("degenerate characteristic points")

    t_i, v_i = left if left is not None else right
    ratio = v_i / v_max
    if not 0 < ratio < 1:
        raise FitError("degenerate characteristic points")
    q = math.sqrt(-2.0 * math.log(ratio))
    if left is not None:
        # rising inflection sits at sigma/2 + sqrt(sigma^2/4 + 1) scale units below the mode
        sigma = (q * q - 1.0) / q
        offset = _inflection_offsets(sigma)[0] if sigma > 0 else 0.0
    else:
        sigma = (1.0 - q * q) / q
        offset = _inflection_offsets(sigma)[1] if sigma > 0 else 0.0
    if not sigma > 0:
        raise FitError("degenerate characteristic points")

    if anchor is not None:
        t_a, k = anchor
        delta = k * sigma
    else:
        t_a, delta = t_i, offset
    if not (t_a - t_mode) * delta > 0:
        raise FitError("degenerate characteristic points")
    scale = (t_a - t_mode) / math.expm1(delta)
    return _component_from_scale(sigma, t_mode, v_max, scale)


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------


def _parabolic(values: np.ndarray, i: int) -> tuple[float, float]:
    """Sub-sample offset and value of the extremum around index i."""
    if i <= 0 or i >= len(values) - 1:
        return 0.0, float(values[i])
    y0, y1, y2 = values[i - 1], values[i], values[i + 1]
    denom = y0 - 2.0 * y1 + y2
    if denom == 0:
        return 0.0, float(y1)
    offset = float(np.clip(0.5 * (y0 - y2) / denom, -0.5, 0.5))
    return offset, float(y1 - 0.25 * (y0 - y2) * offset)


def _time_at(t: np.ndarray, i: int, offset: float) -> float:
    if offset >= 0 and i + 1 < len(t):
        return float(t[i] + offset * (t[i + 1] - t[i]))
    if offset < 0 and i > 0:
        return float(t[i] + offset * (t[i] - t[i - 1]))
    return float(t[i])


def _bracket(r: np.ndarray, p: int) -> tuple[int, int]:
    """Local minima on either side of peak p."""
    lo = p
    while lo > 0 and r[lo - 1] < r[lo]:
        lo -= 1
    hi = p
    while hi < len(r) - 1 and r[hi + 1] < r[hi]:
        hi += 1
    return lo, hi


def _crossing(t: np.ndarray, r: np.ndarray, lo: int, p: int, hi: int, level: float, side: str) -> Optional[float]:
    if side == "left":
        below = np.nonzero(r[lo : p + 1] < level)[0]
        if below.size == 0:
            return None
        i = lo + int(below[-1])
        j = i + 1
    else:
        below = np.nonzero(r[p : hi + 1] < level)[0]
        if below.size == 0:
            return None
        j = p + int(below[0])
        i = j - 1
    frac = (level - r[i]) / (r[j] - r[i])
    return float(t[i] + frac * (t[j] - t[i]))


def _inflection(t: np.ndarray, r: np.ndarray, slope: np.ndarray, lo: int, p: int, hi: int, side: str):
    if side == "left":
        j = lo + int(np.argmax(slope[lo : p + 1]))
        if not (lo < j < p) or slope[j] <= 0:
            return None
        offset, _ = _parabolic(slope, j)
    else:
        j = p + int(np.argmin(slope[p : hi + 1]))
        if not (p < j < hi) or slope[j] >= 0:
            return None
        offset, _ = _parabolic(-slope, j)
    t_i = _time_at(t, j, offset)
    return t_i, float(np.interp(t_i, t, r))


def characterize(t: np.ndarray, r: np.ndarray, p: int, alpha: float) -> LognormalComponent:
    """
    Estimate the component responsible for peak p of a (smoothed) residual.

    Raises:
        FitError: When neither crossings nor inflection points give a valid estimate
    """
    lo, hi = _bracket(r, p)
    offset, v_max = _parabolic(r, p)
    t_mode = _time_at(t, p, offset)
    level = alpha * v_max
    t_left = _crossing(t, r, lo, p, hi, level, "left")
    t_right = _crossing(t, r, lo, p, hi, level, "right")
    if t_left is not None and t_right is not None:
        try:
            return three_point_estimate(t_left, t_mode, t_right, v_max, alpha)
        except FitError:
            pass

    slope = np.gradient(r, t)
    left = _inflection(t, r, slope, lo, p, hi, "left")
    right = _inflection(t, r, slope, lo, p, hi, "right")
    if left is not None and right is not None:
        try:
            return inflection_estimate(t_mode, v_max, left=left, right=right)
        except FitError:
            pass
    beta = math.sqrt(2.0 * math.log(1.0 / alpha))
    anchor = None
    if t_left is not None:
        anchor = (t_left, -beta)
    elif t_right is not None:
        anchor = (t_right, beta)
    for one_side in ({"right": right}, {"left": left}):
        if next(iter(one_side.values())) is None:
            continue
        try:
            return inflection_estimate(t_mode, v_max, anchor=anchor, **one_side)
        except FitError:
            continue
    raise FitError("degenerate characteristic points")


def _bounds(t: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    # per component: t0, log D, mu, log sigma
    span = float(t[-1] - t[0])
    lower = np.tile([t[0] - 10.0 * span - 1.0, -30.0, -15.0, -7.0], k)
    upper = np.tile([t[-1], 30.0, 5.0, 2.0], k)
    return lower, upper


def _refine(
    components: Sequence[LognormalComponent], t: np.ndarray, target: np.ndarray
) -> list[LognormalComponent]:
    """
    Joint least-squares polish of components against target on grid t.

    Uses a bounded trust-region solver on (t0, log D, mu, log sigma) per
    component. Returns the input unchanged when the solver fails, does not
    lower the cost, or leaves a mode outside the grid.
    """
    components = list(components)
    k = len(components)
    if k == 0 or len(t) < 4 * k + 1:
        return components

    def model(x):
        total = np.zeros_like(t)
        for t0, log_d, mu, log_sigma in x.reshape(k, 4):
            total += _speed(t, t0, math.exp(log_d), mu, math.exp(log_sigma))
        return total

    def residuals(x):
        return np.nan_to_num(model(x) - target, nan=1e6, posinf=1e6, neginf=-1e6)

    lower, upper = _bounds(t, k)
    x0 = np.concatenate([[c.t0, math.log(c.D), c.mu, math.log(c.sigma)] for c in components])
    x0 = np.clip(x0, lower, upper)
    start_cost = 0.5 * float(np.sum(residuals(x0) ** 2))
    try:
        result = least_squares(
            residuals,
            x0,
            bounds=(lower, upper),
            method="trf",
            x_scale="jac",
            xtol=REFINE_XTOL,
            ftol=1e-10,
            gtol=1e-10,
            max_nfev=REFINE_MAX_ITERATIONS * (k + 1),
        )
    except (ValueError, FloatingPointError):
        return components
    if not np.all(np.isfinite(result.x)) or not result.cost < start_cost:
        return components
    try:
        refined = [
            LognormalComponent(t0=float(t0), D=math.exp(log_d), mu=float(mu), sigma=math.exp(log_sigma))
            for t0, log_d, mu, log_sigma in result.x.reshape(k, 4)
        ]
    except FitError:
        return components
    if not all(t[0] <= c.t_mode <= t[-1] for c in refined):
        return components
    return refined


def _support(c: LognormalComponent, width: float = 3.0) -> tuple[float, float]:
    return c.t0 + math.exp(c.mu - width * c.sigma), c.t0 + math.exp(c.mu + width * c.sigma)


def _overlaps(a: LognormalComponent, b: LognormalComponent) -> bool:
    a_lo, a_hi = _support(a)
    b_lo, b_hi = _support(b)
    return a_lo < b_hi and b_lo < a_hi


def _rough_guess(t: np.ndarray, r: np.ndarray, p: int, lo: int, hi: int) -> LognormalComponent:
    """Starting point for the solver when the peak's shape cannot be read off."""
    offset, v_max = _parabolic(r, p)
    sigma = 0.3
    scale = max(float(t[hi] - t[lo]) / 2.0, float(t[1] - t[0]))
    return _component_from_scale(sigma, _time_at(t, p, offset), v_max, scale)


def _candidates(
    components: list[LognormalComponent],
    candidate: LognormalComponent,
    t: np.ndarray,
    observed: np.ndarray,
    lo: int,
    hi: int,
    refine: bool,
) -> list[list[LognormalComponent]]:
    """
    Component sets that add one impulse: as estimated, refined on its own
    bracket, and refined together with the accepted components it overlaps.
    """
    options = [components + [candidate]]
    if not refine:
        return options
    base = synthesize(components, t)
    local = _refine([candidate], t[lo : hi + 1], observed[lo : hi + 1] - base[lo : hi + 1])[0]
    options.append(components + [local])

    neighbours = [c for c in components if _overlaps(c, local)]
    if not neighbours:
        return options
    fixed = [c for c in components if not _overlaps(c, local)]
    window = np.zeros(len(t), dtype=bool)
    for c in neighbours + [local]:
        c_lo, c_hi = _support(c)
        window |= (t >= c_lo) & (t <= c_hi)
    window[lo : hi + 1] = True
    target = observed[window] - synthesize(fixed, t[window])
    options.append(fixed + _refine(neighbours + [local], t[window], target))
    return options


def extract(speed: KinematicSeries, cfg: Optional[FitConfig] = None) -> FitResult:
    """
    Greedy sigma-lognormal extraction from a speed profile.

    Residual peaks are visited from the highest down. Each one is estimated,
    refined on its own and together with the already accepted components it
    overlaps, and kept when the best of these improves the SNR by at least
    min_gain_db; otherwise its bracket is skipped and the next peak is tried.
    The reconstruction SNR therefore never decreases as components are added.
    Extraction stops at the SNR target, at max_components or when no peak is
    left. Time is fitted relative to the first sample and speed relative to
    its maximum, so the result shifts and scales with the input.

    Args:
        speed: Speed series of one stroke
        cfg: Extraction thresholds

    Returns:
        FitResult: Components sorted by t0 and the reconstruction SNR

    Raises:
        FitError: "stroke too short to fit"
    """
    cfg = cfg or FitConfig()
    t_abs = np.asarray(speed.t, dtype=float)
    raw = np.asarray(speed.speed, dtype=float)
    if len(t_abs) < MIN_FIT_SAMPLES or t_abs[-1] - t_abs[0] <= MIN_FIT_DURATION:
        raise FitError("stroke too short to fit")

    origin = float(t_abs[0])
    peak = float(np.max(np.abs(raw)))
    if not peak > 0:
        return FitResult(components=(), snr_db=snr_db(raw, np.zeros_like(raw)))
    t = t_abs - origin
    v = raw / peak

    observed = v if cfg.snr_reference == "raw" else smooth(v, cfg.smooth_sigma)
    residual = v.copy()
    excluded = np.zeros(len(t), dtype=bool)
    components: list[LognormalComponent] = []
    current_snr = snr_db(observed, np.zeros_like(v))

    while len(components) < cfg.max_components and current_snr < cfg.snr_target_db:
        smoothed = smooth(residual, cfg.smooth_sigma)
        peaks, props = find_peaks(smoothed, height=PEAK_FLOOR)
        keep = ~excluded[peaks]
        peaks, heights = peaks[keep], props["peak_heights"][keep]
        if peaks.size == 0:
            break
        p = int(peaks[int(np.argmax(heights))])
        lo, hi = _bracket(smoothed, p)

        try:
            estimate = characterize(t, smoothed, p, cfg.alpha)
        except FitError:
            try:
                estimate = _rough_guess(t, smoothed, p, lo, hi)
            except FitError:
                excluded[lo : hi + 1] = True
                continue

        best, best_snr = None, -math.inf
        for option in _candidates(components, estimate, t, observed, lo, hi, cfg.refine):
            option_snr = snr_db(observed, synthesize(option, t))
            if option_snr > best_snr:
                best, best_snr = option, option_snr
        if best_snr - current_snr < cfg.min_gain_db:
            excluded[lo : hi + 1] = True
            continue

        components, current_snr = best, best_snr
        residual = np.maximum(v - synthesize(components, t), -RESIDUAL_CLAMP * smoothed[p])

    fitted = sorted(
        (LognormalComponent(t0=c.t0 + origin, D=c.D * peak, mu=c.mu, sigma=c.sigma) for c in components),
        key=lambda c: (c.t0, c.mu),
    )
    return FitResult(components=tuple(fitted), snr_db=current_snr)


def fit_stroke(
    stroke: Stroke, cfg: Optional[FitConfig] = None, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
) -> FitResult:
    """Regularize a stroke's timing, compute its speed profile and extract components."""
    return extract(speed_profile(regularize(stroke, sample_rate_hz)), cfg)


# ---------------------------------------------------------------------------
# Fit results file
# ---------------------------------------------------------------------------


def write_fit_results(records: Sequence[dict], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, separators=(",", ":")) + "\n")


def read_fit_results(path: Union[str, Path]) -> list[dict]:
    with open(path, "r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]
