"""Configuration management for the siglog CLI.

Values are resolved in this order: command-line flag, YAML config file,
environment (optionally loaded from a .env file), built-in default.
"""
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml
from dotenv import load_dotenv

from .errors import ConfigError
from .features import DEFAULT_N_BINS, Family
from .forest import ForestConfig
from .ink import DEFAULT_SAMPLE_RATE_HZ
from .lognorm import FitConfig
from .synth import MaturationProfile

DEFAULT_OUT_DIR = "siglog-out"
TASKS = ("grade", "gender", "performance")
MODELS = ("linear", "forest")


class Config:
    """Environment-backed settings (SIGLOG_* variables, .env file)."""

    def __init__(self, env_file: Optional[Path] = None):
        """Initialize configuration by loading the .env file from the working directory."""
        env_path = Path(env_file) if env_file else Path.cwd() / ".env"
        self.env_file_path = env_path

        if env_path.exists():
            load_dotenv(env_path, override=False)

    @property
    def config_path(self) -> Optional[str]:
        """Pipeline config file used when --config is not given."""
        return os.getenv("SIGLOG_CONFIG") or None

    @property
    def seed(self) -> Optional[int]:
        return self._int("SIGLOG_SEED")

    @property
    def threads(self) -> Optional[int]:
        return self._int("SIGLOG_THREADS")

    @property
    def out_dir(self) -> Optional[str]:
        return os.getenv("SIGLOG_OUT") or None

    @staticmethod
    def _int(name: str) -> Optional[int]:
        value = os.getenv(name)
        if value is None or value == "":
            return None
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{name} must be an integer, got {value!r}") from None


_config: Optional[Config] = None


def get_config() -> Config:
    """Get or create the global config instance."""
    global _config
    if _config is None:
        _config = Config()
    return _config


def reset_config() -> None:
    global _config
    _config = None


@dataclass(frozen=True)
class SynthSettings:
    n_per_grade: int = 20
    drills_per_student: int = 20
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    calibrate_snr: Optional[float] = None
    null_effects: bool = False
    profile: MaturationProfile = field(default_factory=MaturationProfile)


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: str = DEFAULT_OUT_DIR
    cohort: Optional[str] = None
    ground_truth: Optional[str] = None
    fits: Optional[str] = None
    features_dir: Optional[str] = None
    report_dir: Optional[str] = None
    seed: Optional[int] = None
    threads: int = 1
    fit: FitConfig = field(default_factory=FitConfig)
    n_bins: int = DEFAULT_N_BINS
    entropy_binning: str = "drill"
    snr_aggregation: str = "stroke"
    forest: ForestConfig = field(default_factory=ForestConfig)
    tasks: tuple = TASKS
    families: tuple = tuple(f.value for f in Family)
    models: tuple = MODELS
    synth: SynthSettings = field(default_factory=SynthSettings)

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.n_bins < 2:
            raise ConfigError(f"n_bins must be >= 2, got {self.n_bins}")
        if self.entropy_binning not in ("drill", "cohort"):
            raise ConfigError(f"entropy_binning must be 'drill' or 'cohort', got {self.entropy_binning!r}")
        if self.snr_aggregation not in ("stroke", "drill"):
            raise ConfigError(f"snr_aggregation must be 'stroke' or 'drill', got {self.snr_aggregation!r}")
        for name, allowed, values in (
            ("tasks", TASKS, self.tasks),
            ("families", tuple(f.value for f in Family), self.families),
            ("models", ("linear", "logistic", "forest"), self.models),
        ):
            bad = [v for v in values if v not in allowed]
            if bad:
                raise ConfigError(f"{name}: unknown value(s) {', '.join(map(str, bad))}")

    def path(self, name: str) -> Path:
        """Explicit path setting, or its default location under out_dir."""
        defaults = {
            "cohort": "cohort.ink.jsonl",
            "ground_truth": "ground_truth.jsonl",
            "fits": "fits.jsonl",
            "features_dir": ".",
            "report_dir": "report",
        }
        explicit = getattr(self, name)
        return Path(explicit) if explicit else Path(self.out_dir) / defaults[name]

    def features_path(self, family: str) -> Path:
        return self.path("features_dir") / f"features_{family}.csv"

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required: pass --seed, set 'seed' in the config file or SIGLOG_SEED")
        return self.seed


def _build(cls, data: Any, section: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"'{section}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    return cls(**data)


def _as_tuple(value, name: str) -> tuple:
    if isinstance(value, str):
        return (value,)
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"'{name}' must be a list")
    return tuple(value)


def read_config_file(path) -> dict:
    """Parse a YAML config file into PipelineConfig keyword arguments."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror or e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")

    known = {f.name for f in fields(PipelineConfig)} | {"smooth_sigma", "snr_reference"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")

    values = dict(raw)
    fit_section = dict(values.pop("fit", None) or {})
    for key in ("smooth_sigma", "snr_reference"):
        if key in values:
            fit_section[key] = values.pop(key)
    values["fit"] = _build(FitConfig, fit_section, "fit")
    values["forest"] = _build(ForestConfig, values.get("forest"), "forest")
    synth = dict(values.get("synth") or {})
    profile = synth.pop("profile", None)
    synth_settings = _build(SynthSettings, synth, "synth")
    if profile is not None:
        if not isinstance(profile, dict):
            raise ConfigError("'synth.profile' must be a mapping")
        synth_settings = replace(synth_settings, profile=MaturationProfile.from_dict(profile))
    values["synth"] = synth_settings
    for name in ("tasks", "families", "models"):
        if name in values:
            values[name] = _as_tuple(values[name], name)
    return values


def load_pipeline_config(path: Optional[str] = None, **overrides) -> PipelineConfig:
    """
    Resolve the pipeline configuration.

    Args:
        path: YAML config file (falls back to SIGLOG_CONFIG)
        **overrides: Command-line values; None means "not given"

    Returns:
        PipelineConfig
    """
    env = get_config()
    values: dict = {}
    if env.seed is not None:
        values["seed"] = env.seed
    if env.threads is not None:
        values["threads"] = env.threads
    if env.out_dir:
        values["out_dir"] = env.out_dir

    path = path or env.config_path
    if path:
        values.update(read_config_file(path))

    fit_overrides = {k: overrides.pop(k) for k in ("snr_reference", "smooth_sigma") if k in overrides}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = PipelineConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    fit_overrides = {k: v for k, v in fit_overrides.items() if v is not None}
    if fit_overrides:
        cfg = replace(cfg, fit=replace(cfg.fit, **fit_overrides))
    return replace(cfg, forest=replace(cfg.forest, threads=cfg.threads))
