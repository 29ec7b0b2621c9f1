"""
Synthetic cohorts with known sigma-lognormal ground truth.

Strokes are built in the speed domain: the summed lognormal profile is
sampled at segment midpoints, perturbed with band-limited noise, and
integrated along a direction that blends the components' headings. Younger
grades get more components per stroke, wider sigma spread and more noise.
"""
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.signal import lfilter

from .errors import ConfigError, FitError, InvariantError
from .ink import (
    CHANNELS,
    DEFAULT_SAMPLE_RATE_HZ,
    MAX_QUESTIONS,
    PRESSURE,
    T,
    TILT_X,
    TILT_Y,
    TIP_WIDTH,
    X,
    Y,
    Cohort,
    Drill,
    Gender,
    Hand,
    StudentRecord,
    Stroke,
)
from .kinematics import smooth
from .lognorm import FitConfig, LognormalComponent, fit_stroke, synthesize

N_GRADES = 9
MAX_COMPONENTS_PER_STROKE = 12
SUPPORT_SIGMAS = 3.0
NOISE_SMOOTH_SAMPLES = 2.0
MIN_SIGMA = 0.08


def _lerp(pair: tuple, grade: int) -> float:
    first, last = pair
    return first + (last - first) * (grade - 1) / (N_GRADES - 1)


def _lerp_range(pair: tuple, grade: int) -> tuple:
    (lo1, hi1), (lo9, hi9) = pair
    return _lerp((lo1, lo9), grade), _lerp((hi1, hi9), grade)


@dataclass(frozen=True)
class GradeProfile:
    grade: int
    components_mean: float
    sigma_range: tuple
    noise_amp: float
    gap_range: tuple


@dataclass(frozen=True)
class MaturationProfile:
    """
    Generator parameters. Tuple pairs hold (grade 1, grade 9) values and are
    linearly interpolated in between; plain ranges are shared by all grades.
    """

    components_mean: tuple = (8.0, 3.0)
    sigma_range: tuple = ((0.15, 0.55), (0.18, 0.35))
    noise_amp: tuple = (0.04, 0.012)
    gap_range: tuple = ((0.06, 0.14), (0.07, 0.12))
    mu_range: tuple = (-1.9, -1.4)
    d_range: tuple = (5.0, 25.0)
    strokes_per_drill: tuple = (3, 8)
    pause_range: tuple = (0.10, 0.40)
    pressure_mean: float = 0.50
    pressure_ar: float = 0.98
    pressure_sd: float = 0.01
    tilt_mean: tuple = (30.0, -10.0)
    tilt_ar: float = 0.99
    tilt_sd: float = 0.3
    female_fraction: float = 0.54
    high_performer_fraction: float = 0.5
    perfect_probability: tuple = (0.25, 0.65)
    # latent-label effects on pressure mean and sigma
    gender_pressure_shift: float = 0.04
    gender_sigma_shift: float = -0.02
    performance_pressure_shift: float = 0.03
    performance_sigma_shift: float = -0.03

    def __post_init__(self):
        ranges = {
            "mu_range": self.mu_range,
            "d_range": self.d_range,
            "strokes_per_drill": self.strokes_per_drill,
            "pause_range": self.pause_range,
            "sigma_range (grade 1)": self.sigma_range[0],
            "sigma_range (grade 9)": self.sigma_range[1],
            "gap_range (grade 1)": self.gap_range[0],
            "gap_range (grade 9)": self.gap_range[1],
        }
        for name, (lo, hi) in ranges.items():
            if not lo <= hi:
                raise ConfigError(f"{name}: range ({lo}, {hi}) is not ordered")
        positive = {
            "d_range": self.d_range[0],
            "sigma_range": min(self.sigma_range[0][0], self.sigma_range[1][0]),
            "gap_range": min(self.gap_range[0][0], self.gap_range[1][0]),
            "strokes_per_drill": self.strokes_per_drill[0],
            "components_mean": min(self.components_mean),
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if min(self.components_mean) < 1:
            raise ConfigError("components_mean must be >= 1")
        if min(self.noise_amp) < 0 or self.pressure_sd < 0 or self.tilt_sd < 0:
            raise ConfigError("noise amplitudes and process deviations must be >= 0")
        for name in ("female_fraction", "high_performer_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be in [0, 1]")
        if not all(0 <= p <= 1 for p in self.perfect_probability):
            raise ConfigError("perfect_probability values must be in [0, 1]")
        if not (0 <= self.pressure_ar < 1 and 0 <= self.tilt_ar < 1):
            raise ConfigError("autoregressive coefficients must be in [0, 1)")

    def at(self, grade: int) -> GradeProfile:
        if not 1 <= grade <= N_GRADES:
            raise ConfigError(f"grade must be in 1..{N_GRADES}, got {grade}")
        return GradeProfile(
            grade=grade,
            components_mean=_lerp(self.components_mean, grade),
            sigma_range=_lerp_range(self.sigma_range, grade),
            noise_amp=_lerp(self.noise_amp, grade),
            gap_range=_lerp_range(self.gap_range, grade),
        )

    def with_noise_scale(self, factor: float) -> "MaturationProfile":
        if not factor >= 0:
            raise ConfigError(f"noise scale must be non-negative, got {factor}")
        return replace(self, noise_amp=tuple(a * factor for a in self.noise_amp))

    def without_effects(self) -> "MaturationProfile":
        return replace(
            self,
            gender_pressure_shift=0.0,
            gender_sigma_shift=0.0,
            performance_pressure_shift=0.0,
            performance_sigma_shift=0.0,
            perfect_probability=(self.perfect_probability[0],) * 2,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "MaturationProfile":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown maturation profile keys: {', '.join(unknown)}")

        def _tuple(value):
            return tuple(_tuple(v) for v in value) if isinstance(value, (list, tuple)) else value

        return cls(**{key: _tuple(value) for key, value in data.items()})


@dataclass
class GroundTruth:
    students: dict = field(default_factory=dict)
    strokes: list = field(default_factory=list)

    def merge(self, other: "GroundTruth") -> None:
        self.students.update(other.students)
        self.strokes.extend(other.strokes)

    def write(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            for student_id, labels in self.students.items():
                handle.write(json.dumps({"student_id": student_id, **labels}, separators=(",", ":")) + "\n")
            for record in self.strokes:
                handle.write(json.dumps(record, separators=(",", ":")) + "\n")

    @classmethod
    def read(cls, path: Union[str, Path]) -> "GroundTruth":
        truth = cls()
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                record = json.loads(line)
                if "components" in record:
                    truth.strokes.append(record)
                else:
                    student_id = record.pop("student_id")
                    truth.students[student_id] = record
        return truth


def _ar1(rng: np.random.Generator, n: int, mean: float, coefficient: float, sd: float) -> np.ndarray:
    """First-order autoregressive process started from its stationary distribution."""
    if sd == 0:
        return np.full(n, mean)
    start = rng.normal(0.0, sd / math.sqrt(1.0 - coefficient**2))
    innovations = rng.normal(0.0, sd, n)
    deviation, _ = lfilter([1.0], [1.0, -coefficient], innovations, zi=[coefficient * start])
    return mean + deviation


def generate_stroke(
    components: Sequence[LognormalComponent],
    noise_amp: float,
    seed,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    pressure_mean: float = 0.5,
    tilt_mean: tuple = (30.0, -10.0),
    profile: Optional[MaturationProfile] = None,
) -> Stroke:
    """
    Render lognormal components into pen samples.

    Args:
        components: Ground-truth components, t0 in drill time (>= 0)
        noise_amp: Noise RMS as a fraction of the peak speed
        seed: Seed or numpy Generator
        sample_rate_hz: Sampling rate
        pressure_mean: Mean of the pressure process
        tilt_mean: Means of the tilt_x / tilt_y processes (degrees)
        profile: Source of the process parameters (defaults when omitted)

    Raises:
        InvariantError: Empty component list or negative noise
    """
    if not components:
        raise InvariantError("components: a stroke needs at least one component")
    if noise_amp < 0:
        raise InvariantError(f"noise_amp: must be >= 0, got {noise_amp}")
    profile = profile or MaturationProfile()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    dt = 1.0 / sample_rate_hz
    start = min(c.t0 for c in components)
    end = max(c.t0 + math.exp(c.mu + SUPPORT_SIGMAS * c.sigma) for c in components)
    n = max(int(math.ceil((end - start) / dt)), 8) + 1
    t = start + dt * np.arange(n)
    mid = 0.5 * (t[1:] + t[:-1])

    per_component = np.vstack([synthesize([c], mid) for c in components])
    speed = per_component.sum(axis=0)
    if noise_amp > 0:
        noise = smooth(rng.standard_normal(mid.size), NOISE_SMOOTH_SAMPLES)
        rms = math.sqrt(float(np.mean(noise**2)))
        if rms > 0:
            speed = np.maximum(speed + noise / rms * noise_amp * float(speed.max()), 0.0)

    headings = rng.uniform(-math.pi, math.pi, len(components))
    direction = per_component.T @ np.column_stack([np.cos(headings), np.sin(headings)])
    norm = np.hypot(direction[:, 0], direction[:, 1])
    fallback = np.array([math.cos(headings[0]), math.sin(headings[0])])
    direction = np.where(norm[:, None] > 0, direction / np.where(norm > 0, norm, 1.0)[:, None], fallback)
    steps = direction * (speed * dt)[:, None]
    origin = rng.uniform(0.0, 100.0, 2)
    xy = origin + np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])

    points = np.zeros((n, len(CHANNELS)))
    points[:, T] = t
    points[:, X] = xy[:, 0]
    points[:, Y] = xy[:, 1]
    pressure = _ar1(rng, n, pressure_mean, profile.pressure_ar, profile.pressure_sd)
    points[:, PRESSURE] = np.clip(pressure, 0.02, 1.0)
    points[:, TILT_X] = np.clip(_ar1(rng, n, tilt_mean[0], profile.tilt_ar, profile.tilt_sd), -90.0, 90.0)
    points[:, TILT_Y] = np.clip(_ar1(rng, n, tilt_mean[1], profile.tilt_ar, profile.tilt_sd), -90.0, 90.0)
    points[:, TIP_WIDTH] = 0.5 + points[:, PRESSURE]
    return Stroke(points)


def sample_components(
    rng: np.random.Generator, grade: GradeProfile, profile: MaturationProfile, start: float, sigma_shift: float = 0.0
) -> list[LognormalComponent]:
    """Draw one stroke's components for a grade, onsets starting at `start`."""
    count = 1 + int(rng.poisson(max(grade.components_mean - 1.0, 0.0)))
    count = min(count, MAX_COMPONENTS_PER_STROKE)
    components = []
    t0 = start
    for _ in range(count):
        sigma = max(MIN_SIGMA, rng.uniform(*grade.sigma_range) + sigma_shift)
        components.append(
            LognormalComponent(
                t0=t0,
                D=float(rng.uniform(*profile.d_range)),
                mu=float(rng.uniform(*profile.mu_range)),
                sigma=float(sigma),
            )
        )
        t0 += float(rng.uniform(*grade.gap_range))
    return components


def _student(args) -> tuple[StudentRecord, GroundTruth]:
    profile, grade, index, drills_per_student, seed_seq, sample_rate_hz = args
    rng = np.random.default_rng(seed_seq)
    student_id = f"G{grade}S{index:03d}"
    gender = Gender.FEMALE if rng.random() < profile.female_fraction else Gender.MALE
    high = bool(rng.random() < profile.high_performer_fraction)
    writing = Hand.RIGHT if rng.random() < 0.9 else Hand.LEFT
    dominant = writing if rng.random() < 0.95 else (Hand.LEFT if writing == Hand.RIGHT else Hand.RIGHT)

    female = gender == Gender.FEMALE
    pressure_mean = (
        profile.pressure_mean
        + (profile.gender_pressure_shift if female else 0.0)
        + (profile.performance_pressure_shift if high else 0.0)
    )
    sigma_shift = (profile.gender_sigma_shift if female else 0.0) + (
        profile.performance_sigma_shift if high else 0.0
    )
    grade_profile = profile.at(grade)
    truth = GroundTruth(students={student_id: {"gender": gender.value, "high_performer": high}})

    drills = []
    for d in range(drills_per_student):
        drill_id = f"{student_id}-D{d:02d}"
        cursor = float(rng.uniform(0.2, 0.8))
        strokes = []
        n_strokes = int(rng.integers(profile.strokes_per_drill[0], profile.strokes_per_drill[1] + 1))
        for s in range(n_strokes):
            components = sample_components(rng, grade_profile, profile, cursor, sigma_shift)
            stroke = generate_stroke(
                components,
                grade_profile.noise_amp,
                rng,
                sample_rate_hz=sample_rate_hz,
                pressure_mean=pressure_mean,
                tilt_mean=profile.tilt_mean,
                profile=profile,
            )
            strokes.append(stroke)
            truth.strokes.append(
                {
                    "student_id": student_id,
                    "drill_id": drill_id,
                    "stroke_index": s,
                    "components": [c.to_dict() for c in components],
                }
            )
            cursor = float(stroke.t[-1]) + float(rng.uniform(*profile.pause_range))
        n_questions = int(rng.integers(1, MAX_QUESTIONS + 1))
        perfect = rng.random() < profile.perfect_probability[1 if high else 0]
        n_correct = n_questions if perfect else int(rng.integers(0, n_questions))
        drills.append(Drill(drill_id=drill_id, strokes=tuple(strokes), n_questions=n_questions, n_correct=n_correct))

    student = StudentRecord(
        student_id=student_id,
        grade=grade,
        gender=gender,
        writing_hand=writing,
        dominant_hand=dominant,
        drills=tuple(drills),
        age=5 + grade + int(rng.integers(0, 2)),
    )
    return student, truth


def generate_cohort(
    profile: MaturationProfile,
    n_per_grade: int,
    drills_per_student: int,
    seed: int,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    threads: int = 1,
) -> tuple[Cohort, GroundTruth]:
    """
    Generate nine grades of students with per-student seed substreams.

    Output depends only on (profile, sizes, seed, sample rate), not on threads.

    Raises:
        ConfigError: Invalid sizes
    """
    if n_per_grade < 2:
        raise ConfigError(f"n_per_grade must be >= 2, got {n_per_grade}")
    if drills_per_student < 1:
        raise ConfigError(f"drills_per_student must be >= 1, got {drills_per_student}")
    plan = [(grade, i) for grade in range(1, N_GRADES + 1) for i in range(1, n_per_grade + 1)]
    seeds = np.random.SeedSequence(seed).spawn(len(plan))
    jobs = [(profile, g, i, drills_per_student, s, sample_rate_hz) for (g, i), s in zip(plan, seeds)]
    if threads > 1:
        results = Parallel(n_jobs=threads)(delayed(_student)(job) for job in jobs)
    else:
        results = [_student(job) for job in jobs]
    truth = GroundTruth()
    for _, part in results:
        truth.merge(part)
    cohort = Cohort(students=tuple(student for student, _ in results), sample_rate_hz=sample_rate_hz)
    return cohort, truth


def mean_extraction_snr(
    profile: MaturationProfile,
    n_strokes: int,
    seed: int,
    cfg: Optional[FitConfig] = None,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> float:
    """Mean extraction SNR over strokes drawn evenly from all grades."""
    rng = np.random.default_rng(seed)
    snrs = []
    for k in range(n_strokes):
        grade = profile.at(1 + k % N_GRADES)
        components = sample_components(rng, grade, profile, float(rng.uniform(0.2, 0.8)))
        stroke = generate_stroke(components, grade.noise_amp, rng, sample_rate_hz, profile=profile)
        try:
            snrs.append(fit_stroke(stroke, cfg, sample_rate_hz).snr_db)
        except FitError:
            continue
    if not snrs:
        raise FitError("calibration strokes could not be fitted")
    return float(np.mean(snrs))


def calibrate_noise(
    profile: MaturationProfile,
    target_snr_db: float,
    seed: int,
    n_strokes: int = 45,
    factors: Optional[Sequence[float]] = None,
    cfg: Optional[FitConfig] = None,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> tuple[MaturationProfile, float, float]:
    """
    Scale the profile's noise so the mean extraction SNR is closest to a target.

    The default sweep starts from noiseless strokes and runs geometrically
    from 1/8 to 4 times the profile's noise.

    Returns:
        (scaled profile, chosen factor, its mean SNR)
    """
    if not target_snr_db > 0:
        raise ConfigError(f"target SNR must be positive, got {target_snr_db}")
    factors = list(factors) if factors is not None else [0.0] + list(np.geomspace(0.125, 4.0, 11))
    best = None
    for factor in factors:
        snr = mean_extraction_snr(profile.with_noise_scale(factor), n_strokes, seed, cfg, sample_rate_hz)
        if best is None or abs(snr - target_snr_db) < abs(best[1] - target_snr_db):
            best = (factor, snr)
    factor, snr = best
    return profile.with_noise_scale(factor), float(factor), snr


def profile_dict(profile: MaturationProfile) -> dict:
    return asdict(profile)
