"""Shared fixtures and builders for the siglog test suite."""
import numpy as np
import pandas as pd
import pytest

from siglog_cli.config import reset_config
from siglog_cli.ink import Cohort, Drill, Stroke, StudentRecord


def make_stroke(t, x, y=None, pressure=0.5, tilt_x=10.0, tilt_y=-5.0):
    """Build a stroke from time and coordinate arrays; scalars broadcast."""
    t = np.asarray(t, dtype=float)
    n = len(t)
    x = np.asarray(x, dtype=float)
    y = np.zeros(n) if y is None else np.asarray(y, dtype=float)
    points = np.column_stack(
        [
            t,
            x,
            y,
            np.zeros(n),
            np.broadcast_to(pressure, n),
            np.broadcast_to(tilt_x, n),
            np.broadcast_to(tilt_y, n),
            np.full(n, 0.3),
        ]
    )
    return Stroke(points)


def line_stroke(n=10, step=1.0, rate=480.0, start=0.0, **channels):
    """Straight constant-velocity stroke along x."""
    t = start + np.arange(n) / rate
    return make_stroke(t, np.arange(n) * step, **channels)


def make_student(student_id="s001", grade=3, gender="female", drills=None, n_correct=5):
    if drills is None:
        drills = [Drill("d01", (line_stroke(),), n_questions=5, n_correct=n_correct)]
    return StudentRecord(
        student_id=student_id,
        grade=grade,
        gender=gender,
        writing_hand="right",
        dominant_hand="right",
        drills=tuple(drills),
    )


def feature_frame(seed, n_per_grade=10, signal=True):
    """Student table whose first feature tracks grade; gender and performance are random."""
    rng = np.random.default_rng(seed)
    grades = np.repeat(np.arange(1, 10), n_per_grade)
    n = grades.size
    f1 = 0.5 * grades + rng.normal(scale=0.05 if signal else 5.0, size=n)
    return pd.DataFrame(
        {
            "student_id": [f"s{i:03d}" for i in range(n)],
            "grade": grades,
            "gender": rng.choice(["female", "male"], size=n),
            "perfect_ratio": rng.uniform(0.0, 1.0, size=n),
            "f1_avg": f1,
            "f2_avg": rng.normal(size=n),
            "f3_avg": rng.normal(size=n),
            "f4_avg": rng.normal(size=n),
        }
    )


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    """Run every test without SIGLOG_* variables and outside any .env directory."""
    for name in ("SIGLOG_CONFIG", "SIGLOG_SEED", "SIGLOG_THREADS", "SIGLOG_OUT"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    reset_config()
    yield
    reset_config()


@pytest.fixture
def minimal_cohort():
    return Cohort(students=(make_student(),))
