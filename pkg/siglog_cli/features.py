"""
Drill-level feature families and their student-level aggregation.

Three families are computed per drill:

- basic: mean/std of speed, pressure, tilt_x, tilt_y
- entropy: mean/std/normalized entropy of acceleration, pressure, tilt_x, tilt_y
- siglog: mean/std of sigma-lognormal quantities (C, SNR, SNR/C, D, t0, mu, sigma)

Students are summarized by the mean and standard deviation of their drill
features (basic, entropy) or by the mean only (siglog).
"""
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import entropy as shannon_entropy

from .errors import FeatureError, FitError
from .ink import DEFAULT_SAMPLE_RATE_HZ, Cohort, Drill, StudentRecord, perfect_ratio
from .kinematics import accel_profile, regularize, smooth, speed_profile
from .lognorm import SNR_CLAMP_DB, SNR_FLOOR_RATIO, FitConfig, FitResult, fit_stroke, synthesize

DEFAULT_N_BINS = 16
ID_COLUMNS = ["student_id", "grade", "gender", "perfect_ratio"]

SIGLOG_STROKE_QUANTITIES = ("C", "snr", "snr_over_c")
SIGLOG_COMPONENT_QUANTITIES = ("D", "t0", "mu", "sigma")
CHANNELS = ("pressure", "tilt_x", "tilt_y")


class Family(str, Enum):
    BASIC = "basic"
    ENTROPY = "entropy"
    SIGLOG = "siglog"


def _family(value) -> Family:
    try:
        return Family(value)
    except ValueError:
        raise FeatureError(f"unknown feature family '{value}'") from None


@dataclass(frozen=True)
class DrillFeatures:
    family: Family
    values: dict

    def __post_init__(self):
        bad = [name for name, v in self.values.items() if not math.isfinite(v)]
        if bad:
            raise FeatureError(f"non-finite {self.family.value} features: {', '.join(bad)}")


@dataclass(frozen=True)
class FeatureVector:
    student_id: str
    family: Family
    values: dict


@dataclass(frozen=True)
class FeatureSettings:
    """Knobs shared by every drill of a feature-table run."""

    family: Family = Family.BASIC
    n_bins: int = DEFAULT_N_BINS
    entropy_binning: str = "drill"
    snr_aggregation: str = "stroke"
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    fit: FitConfig = field(default_factory=FitConfig)


def normalized_entropy(values, n_bins: int = DEFAULT_N_BINS, value_range: Optional[tuple] = None) -> float:
    """
    Shannon entropy of an equal-width histogram, divided by ln(n_bins).

    Args:
        values: Samples of one channel
        n_bins: Number of bins partitioning [min, max] (or value_range)
        value_range: Fixed (low, high) bin range; values are clipped into it

    Returns:
        Entropy in [0, 1]
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise FeatureError("cannot compute entropy of an empty series")
    if n_bins < 2:
        raise FeatureError(f"n_bins must be >= 2, got {n_bins}")
    low, high = value_range if value_range is not None else (values.min(), values.max())
    if not high > low:
        return 0.0
    counts, _ = np.histogram(np.clip(values, low, high), bins=n_bins, range=(low, high))
    return float(np.clip(shannon_entropy(counts, base=n_bins), 0.0, 1.0))


def _pooled(arrays: Sequence[np.ndarray]) -> np.ndarray:
    arrays = [a for a in arrays if a.size]
    return np.concatenate(arrays) if arrays else np.empty(0)


def _mean_std(prefix_values: dict) -> dict:
    out = {}
    for name, values in prefix_values.items():
        out[f"mean_{name}"] = float(np.mean(values))
        out[f"std_{name}"] = float(np.std(values))
    return out


def basic_drill_features(drill: Drill) -> DrillFeatures:
    speed = _pooled([speed_profile(s).speed for s in drill.strokes])
    if speed.size == 0:
        raise FeatureError(f"drill {drill.drill_id}: no speed samples")
    channels = {"speed": speed}
    for name in CHANNELS:
        channels[name] = _pooled([getattr(s, name) for s in drill.strokes])
    return DrillFeatures(Family.BASIC, _mean_std(channels))


def _accel_samples(drill: Drill) -> np.ndarray:
    series = [speed_profile(s) for s in drill.strokes if len(s) >= 3]
    return _pooled([accel_profile(s).accel for s in series])


def entropy_drill_features(
    drill: Drill, n_bins: int = DEFAULT_N_BINS, ranges: Optional[dict] = None
) -> DrillFeatures:
    """
    Mean, std and normalized entropy of acceleration, pressure and tilt.

    Args:
        drill: Drill to describe
        n_bins: Histogram bins for the entropy
        ranges: Optional channel -> (low, high) bin ranges shared across the cohort;
            per-drill [min, max] when omitted
    """
    accel = _accel_samples(drill)
    if accel.size == 0:
        raise FeatureError(f"drill {drill.drill_id}: no acceleration samples")
    channels = {"accel": accel}
    for name in CHANNELS:
        channels[name] = _pooled([getattr(s, name) for s in drill.strokes])
    values = {}
    for name, samples in channels.items():
        values[f"mean_{name}"] = float(np.mean(samples))
        values[f"std_{name}"] = float(np.std(samples))
        values[f"h_norm_{name}"] = normalized_entropy(samples, n_bins, (ranges or {}).get(name))
    return DrillFeatures(Family.ENTROPY, values)


def fit_drill(
    drill: Drill, cfg: Optional[FitConfig] = None, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
) -> list[Optional[FitResult]]:
    """Fit every stroke of a drill; strokes that cannot be fitted map to None."""
    fits = []
    for stroke in drill.strokes:
        try:
            fits.append(fit_stroke(stroke, cfg, sample_rate_hz))
        except FitError:
            fits.append(None)
    return fits


def siglog_drill_features(
    drill: Drill,
    cfg: Optional[FitConfig] = None,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    snr_aggregation: str = "stroke",
    fits: Optional[Sequence[Optional[FitResult]]] = None,
) -> DrillFeatures:
    """
    Mean/std over a drill of the seven sigma-lognormal quantities.

    Stroke quantities (C, SNR, SNR/C) are taken per stroke; component
    quantities (D, t0, mu, sigma) are pooled over all components of the drill.
    t0 is measured from the stroke's first sample. Strokes that cannot be
    fitted, or yield no component, are skipped.

    Args:
        drill: Drill to describe
        cfg: Extraction settings
        sample_rate_hz: Nominal sampling rate of the cohort
        snr_aggregation: "stroke" averages per-stroke SNR; "drill" pools the
            signal and residual energy of all strokes into one SNR, scored on
            the same resampled grid and reference as the fit, so SNR and
            SNR/C have a single value per drill and zero spread
        fits: Precomputed per-stroke fits (None entries for unfittable strokes)

    Raises:
        FeatureError: For an unknown aggregation mode
        FitError: "no fittable strokes"
    """
    if snr_aggregation not in ("stroke", "drill"):
        raise FeatureError(f"unknown snr aggregation '{snr_aggregation}'")
    cfg = cfg or FitConfig()
    if fits is None:
        fits = fit_drill(drill, cfg, sample_rate_hz)
    if len(fits) != len(drill.strokes):
        raise FeatureError(f"drill {drill.drill_id}: {len(fits)} fits for {len(drill.strokes)} strokes")

    per_stroke = {name: [] for name in SIGLOG_STROKE_QUANTITIES}
    per_component = {name: [] for name in SIGLOG_COMPONENT_QUANTITIES}
    signal_energy = residual_energy = 0.0
    for stroke, fit in zip(drill.strokes, fits):
        if fit is None or fit.n_components == 0:
            continue
        per_stroke["C"].append(fit.n_components)
        per_stroke["snr"].append(fit.snr_db)
        per_stroke["snr_over_c"].append(fit.snr_over_c)
        start = stroke.t[0]
        for c in fit.components:
            per_component["D"].append(c.D)
            per_component["t0"].append(c.t0 - start)
            per_component["mu"].append(c.mu)
            per_component["sigma"].append(c.sigma)
        if snr_aggregation == "drill":
            series = speed_profile(regularize(stroke, sample_rate_hz))
            observed = series.speed if cfg.snr_reference == "raw" else smooth(series.speed, cfg.smooth_sigma)
            signal_energy += float(np.sum(observed**2))
            residual_energy += float(np.sum((observed - synthesize(fit.components, series.t)) ** 2))

    if not per_stroke["C"]:
        raise FitError(f"drill {drill.drill_id}: no fittable strokes")

    values = _mean_std({**per_stroke, **per_component})
    if snr_aggregation == "drill":
        if residual_energy <= SNR_FLOOR_RATIO * signal_energy:
            pooled = SNR_CLAMP_DB
        else:
            pooled = min(SNR_CLAMP_DB, 10.0 * math.log10(signal_energy / residual_energy))
        values["mean_snr"] = pooled
        values["std_snr"] = 0.0
        values["mean_snr_over_c"] = pooled / max(values["mean_C"], 1.0)
        values["std_snr_over_c"] = 0.0
    return DrillFeatures(Family.SIGLOG, values)


def aggregate_student(
    drill_features: Sequence[DrillFeatures], family, student_id: str = ""
) -> FeatureVector:
    """
    Summarize a student's drills: mean and std (basic, entropy) or mean (siglog).

    Raises:
        FeatureError: On an empty list or mixed families
    """
    family = _family(family)
    if not drill_features:
        raise FeatureError(f"student {student_id}: no drill features to aggregate")
    mismatched = {d.family for d in drill_features if d.family != family}
    if mismatched:
        raise FeatureError(
            f"student {student_id}: family mismatch, expected {family.value}, "
            f"got {', '.join(sorted(f.value for f in mismatched))}"
        )
    names = list(drill_features[0].values)
    matrix = np.array([[d.values[name] for name in names] for d in drill_features])
    values = {}
    for j, name in enumerate(names):
        values[f"{name}_avg"] = float(np.mean(matrix[:, j]))
        if family != Family.SIGLOG:
            values[f"{name}_sd"] = float(np.std(matrix[:, j]))
    return FeatureVector(student_id, family, values)


def feature_names(family) -> list[str]:
    """Student-level column names of a family, in table order."""
    family = _family(family)
    if family == Family.BASIC:
        drill = list(_mean_std({name: [0.0] for name in ("speed",) + CHANNELS}))
    elif family == Family.ENTROPY:
        drill = [f"{stat}_{name}" for name in ("accel",) + CHANNELS for stat in ("mean", "std", "h_norm")]
    else:
        drill = list(_mean_std({name: [0.0] for name in SIGLOG_STROKE_QUANTITIES + SIGLOG_COMPONENT_QUANTITIES}))
    if family == Family.SIGLOG:
        return [f"{name}_avg" for name in drill]
    return [f"{name}_{suffix}" for name in drill for suffix in ("avg", "sd")]


def cohort_ranges(cohort: Cohort) -> dict:
    """Cohort-wide [min, max] of each entropy channel."""
    lows, highs = {}, {}
    for student in cohort:
        for drill in student.drills:
            channels = {"accel": _accel_samples(drill)}
            for name in CHANNELS:
                channels[name] = _pooled([getattr(s, name) for s in drill.strokes])
            for name, samples in channels.items():
                if samples.size == 0:
                    continue
                lows[name] = min(lows.get(name, np.inf), float(samples.min()))
                highs[name] = max(highs.get(name, -np.inf), float(samples.max()))
    return {name: (lows[name], highs[name]) for name in lows}


def drill_features(
    drill: Drill,
    settings: FeatureSettings,
    ranges: Optional[dict] = None,
    fits: Optional[Sequence[Optional[FitResult]]] = None,
) -> DrillFeatures:
    if settings.family == Family.BASIC:
        return basic_drill_features(drill)
    if settings.family == Family.ENTROPY:
        return entropy_drill_features(drill, settings.n_bins, ranges)
    return siglog_drill_features(drill, settings.fit, settings.sample_rate_hz, settings.snr_aggregation, fits)


def student_features(
    student: StudentRecord,
    settings: FeatureSettings,
    ranges: Optional[dict] = None,
    fits: Optional[dict] = None,
) -> FeatureVector:
    """
    Feature vector of one student.

    Args:
        fits: Optional drill_id -> per-stroke fits, reused instead of refitting
    """
    per_drill = []
    for drill in student.drills:
        drill_fits = fits.get(drill.drill_id) if fits else None
        try:
            per_drill.append(drill_features(drill, settings, ranges, drill_fits))
        except FitError:
            # drills with no fittable stroke carry no siglog information
            continue
    if not per_drill:
        raise FeatureError(f"student {student.student_id}: no drill yielded {settings.family.value} features")
    return aggregate_student(per_drill, settings.family, student.student_id)


def _student_row(args) -> dict:
    student, settings, ranges, fits = args
    vector = student_features(student, settings, ranges, fits)
    row = {
        "student_id": student.student_id,
        "grade": student.grade,
        "gender": student.gender.value,
        "perfect_ratio": perfect_ratio(student),
    }
    row.update(vector.values)
    return row


def feature_table(
    cohort: Cohort,
    settings: FeatureSettings,
    threads: int = 1,
    fits: Optional[dict] = None,
) -> pd.DataFrame:
    """
    Student-level feature table for one family, one row per student in cohort order.

    Args:
        cohort: Parsed cohort
        settings: Family and extraction settings
        threads: Worker processes; 1 computes in-process
        fits: Optional student_id -> drill_id -> per-stroke fits
    """
    settings = replace(settings, family=_family(settings.family), sample_rate_hz=cohort.sample_rate_hz)
    ranges = None
    if settings.family == Family.ENTROPY and settings.entropy_binning == "cohort":
        ranges = cohort_ranges(cohort)
    elif settings.entropy_binning not in ("drill", "cohort"):
        raise FeatureError(f"unknown entropy binning '{settings.entropy_binning}'")

    jobs = [(s, settings, ranges, (fits or {}).get(s.student_id)) for s in cohort]
    if threads > 1 and len(jobs) > 1:
        rows = Parallel(n_jobs=threads)(delayed(_student_row)(job) for job in jobs)
    else:
        rows = [_student_row(job) for job in jobs]
    return pd.DataFrame(rows, columns=ID_COLUMNS + feature_names(settings.family))


def fits_by_drill(records: Sequence[dict]) -> dict:
    """Group fit-result records into student_id -> drill_id -> per-stroke fits."""
    grouped: dict = {}
    for record in records:
        drills = grouped.setdefault(record["student_id"], {})
        strokes = drills.setdefault(record["drill_id"], {})
        strokes[int(record["stroke_index"])] = None if "error" in record else FitResult.from_record(record)
    return {
        student_id: {drill_id: [strokes[i] for i in sorted(strokes)] for drill_id, strokes in drills.items()}
        for student_id, drills in grouped.items()
    }


def write_feature_table(table: pd.DataFrame, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)


def read_feature_table(path: Union[str, Path]) -> pd.DataFrame:
    table = pd.read_csv(path, dtype={"student_id": str, "gender": str})
    missing = [c for c in ID_COLUMNS if c not in table.columns]
    if missing:
        raise FeatureError(f"{path}: missing columns {', '.join(missing)}")
    return table


def _student_fit_records(args) -> list[dict]:
    student, cfg, sample_rate_hz = args
    records = []
    for drill in student.drills:
        for index, stroke in enumerate(drill.strokes):
            ids = {"student_id": student.student_id, "drill_id": drill.drill_id, "stroke_index": index}
            try:
                records.append(fit_stroke(stroke, cfg, sample_rate_hz).to_record(**ids))
            except FitError as e:
                records.append({**ids, "error": str(e)})
    return records


def fit_cohort(cohort: Cohort, cfg: Optional[FitConfig] = None, threads: int = 1) -> list[dict]:
    """Fit-result records for every stroke of a cohort, in file order."""
    jobs = [(s, cfg, cohort.sample_rate_hz) for s in cohort]
    if threads > 1 and len(jobs) > 1:
        parts = Parallel(n_jobs=threads)(delayed(_student_fit_records)(job) for job in jobs)
    else:
        parts = [_student_fit_records(job) for job in jobs]
    return [record for part in parts for record in part]
