"""Online handwriting data model and the line-delimited ink file format.

A cohort file is UTF-8 JSON Lines:

    {"sample_rate_hz": 480.0}
    {"student_id": "s001", "grade": 3, "gender": "female", "writing_hand": "right", "dominant_hand": "right"}
    {"drill_id": "d01", "n_questions": 5, "n_correct": 5, "strokes": [[[t, x, y, z, p, tx, ty, w], ...], ...]}
    ...
    <blank line>
    {"student_id": "s002", ...}

The sampling-rate line is optional on input (480 Hz when absent). Each student
block starts with its header line and lists its drills, one per line; blocks
are separated by a blank line.
"""
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, NamedTuple, Optional, Union

import numpy as np

from .errors import InkFormatError, InvariantError

DEFAULT_SAMPLE_RATE_HZ = 480.0

# Column order of a stroke's point array (and of each point in the file)
CHANNELS = ("t", "x", "y", "z", "pressure", "tilt_x", "tilt_y", "tip_width")
T, X, Y, Z, PRESSURE, TILT_X, TILT_Y, TIP_WIDTH = range(len(CHANNELS))

MAX_QUESTIONS = 20
PERFORMANCE_THRESHOLD = 0.45


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"


class Hand(str, Enum):
    LEFT = "left"
    RIGHT = "right"


class InkSample(NamedTuple):
    """One pen sample; t in seconds from drill start, tilt in degrees."""

    t: float
    x: float
    y: float
    z: float
    pressure: float
    tilt_x: float
    tilt_y: float
    tip_width: float


@dataclass(frozen=True, eq=False)
class Stroke:
    """Pen-down samples, stored as an (n, 8) array in CHANNELS order."""

    points: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim != 2 or points.shape[1] != len(CHANNELS):
            raise InvariantError(
                f"points: expected rows of {len(CHANNELS)} values, got shape {points.shape}"
            )
        if points.shape[0] < 2:
            raise InvariantError("samples: a stroke needs at least 2 samples")
        if not np.all(np.isfinite(points)):
            raise InvariantError("samples: non-finite value")
        t = points[:, T]
        if t[0] < 0:
            raise InvariantError("t: negative timestamp")
        if np.any(np.diff(t) <= 0):
            raise InvariantError("t: non-monotonic t")
        pressure = points[:, PRESSURE]
        if np.any((pressure < 0) | (pressure > 1)):
            raise InvariantError("pressure: outside [0, 1]")
        tilt = points[:, [TILT_X, TILT_Y]]
        if np.any(np.abs(tilt) > 90):
            raise InvariantError("tilt: outside [-90, 90]")
        if np.any(points[:, TIP_WIDTH] < 0):
            raise InvariantError("tip_width: negative")
        points.flags.writeable = False
        object.__setattr__(self, "points", points)

    def __eq__(self, other):
        if not isinstance(other, Stroke):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    __hash__ = None

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def samples(self) -> list[InkSample]:
        return [InkSample(*row) for row in self.points.tolist()]

    @property
    def t(self) -> np.ndarray:
        return self.points[:, T]

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, [X, Y]]

    @property
    def pressure(self) -> np.ndarray:
        return self.points[:, PRESSURE]

    @property
    def tilt_x(self) -> np.ndarray:
        return self.points[:, TILT_X]

    @property
    def tilt_y(self) -> np.ndarray:
        return self.points[:, TILT_Y]


@dataclass(frozen=True)
class Drill:
    """One answered exercise sheet."""

    drill_id: str
    strokes: tuple[Stroke, ...]
    n_questions: int
    n_correct: int

    def __post_init__(self):
        object.__setattr__(self, "strokes", tuple(self.strokes))
        if not self.strokes:
            raise InvariantError(f"strokes: drill {self.drill_id!r} has no strokes")
        if not _is_int(self.n_questions) or not 1 <= self.n_questions <= MAX_QUESTIONS:
            raise InvariantError(
                f"n_questions: {self.n_questions!r} not in [1, {MAX_QUESTIONS}] "
                f"for drill {self.drill_id!r}"
            )
        if not _is_int(self.n_correct) or not 0 <= self.n_correct <= self.n_questions:
            raise InvariantError(
                f"n_correct: {self.n_correct!r} not in [0, {self.n_questions}] "
                f"for drill {self.drill_id!r}"
            )

    @property
    def score_ratio(self) -> float:
        return score_ratio(self)


@dataclass(frozen=True)
class StudentRecord:
    """A student's metadata and answered drills. Age is optional and unused by the tasks."""

    student_id: str
    grade: int
    gender: Gender
    writing_hand: Hand
    dominant_hand: Hand
    drills: tuple[Drill, ...]
    age: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "drills", tuple(self.drills))
        if not _is_int(self.grade) or not 1 <= self.grade <= 9:
            raise InvariantError(f"grade: {self.grade!r} not in [1, 9] for student {self.student_id!r}")
        for name, enum_type in (
            ("gender", Gender),
            ("writing_hand", Hand),
            ("dominant_hand", Hand),
        ):
            value = getattr(self, name)
            try:
                object.__setattr__(self, name, enum_type(value))
            except ValueError:
                raise InvariantError(
                    f"{name}: invalid value {value!r} for student {self.student_id!r}"
                ) from None
        if not self.drills:
            raise InvariantError(f"drills: student {self.student_id!r} has no drills")

    @property
    def perfect_ratio(self) -> float:
        return perfect_ratio(self)


@dataclass(frozen=True)
class Cohort:
    """All students of a recording campaign. Immutable once built."""

    students: tuple[StudentRecord, ...]
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "students", tuple(self.students))
        if not self.sample_rate_hz > 0:
            raise InvariantError(f"sample_rate_hz: must be positive, got {self.sample_rate_hz!r}")
        index = {}
        for student in self.students:
            if student.student_id in index:
                raise InvariantError(f"student_id: duplicate student id {student.student_id!r}")
            index[student.student_id] = student
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.students)

    def __iter__(self) -> Iterator[StudentRecord]:
        return iter(self.students)

    def student(self, student_id: str) -> StudentRecord:
        return self._index[student_id]


def _is_int(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def score_ratio(drill: Drill) -> float:
    """Fraction of correctly answered questions of a drill."""
    return drill.n_correct / drill.n_questions


def perfect_ratio(student: StudentRecord) -> float:
    """Fraction of a student's drills answered with a perfect score."""
    perfect = sum(1 for drill in student.drills if drill.n_correct == drill.n_questions)
    return perfect / len(student.drills)


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------


def _require(record: dict, key: str, line_no: int):
    if key not in record:
        raise InkFormatError(line_no, f"missing field {key!r}")
    return record[key]


def _decode_line(line: str, line_no: int) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise InkFormatError(line_no, f"invalid JSON: {e.msg}") from None
    if not isinstance(record, dict):
        raise InkFormatError(line_no, "expected a JSON object")
    return record


def _build_drill(record: dict, line_no: int, student_id: str) -> Drill:
    drill_id = str(_require(record, "drill_id", line_no))
    strokes_raw = _require(record, "strokes", line_no)
    if not isinstance(strokes_raw, list):
        raise InkFormatError(line_no, "'strokes' must be a list")
    strokes = []
    for index, stroke_raw in enumerate(strokes_raw):
        try:
            points = np.asarray(stroke_raw, dtype=float)
        except (TypeError, ValueError):
            raise InkFormatError(line_no, f"stroke {index}: points must be numeric rows") from None
        try:
            strokes.append(Stroke(points))
        except InvariantError as e:
            raise InvariantError(
                f"line {line_no}: student {student_id!r} drill {drill_id!r} stroke {index}: {e}"
            ) from None
    try:
        return Drill(
            drill_id=drill_id,
            strokes=tuple(strokes),
            n_questions=_require(record, "n_questions", line_no),
            n_correct=_require(record, "n_correct", line_no),
        )
    except InvariantError as e:
        raise InvariantError(f"line {line_no}: student {student_id!r}: {e}") from None


def _build_student(header: dict, header_line: int, drills: list[Drill]) -> StudentRecord:
    student_id = str(_require(header, "student_id", header_line))
    try:
        return StudentRecord(
            student_id=student_id,
            grade=_require(header, "grade", header_line),
            gender=_require(header, "gender", header_line),
            writing_hand=_require(header, "writing_hand", header_line),
            dominant_hand=_require(header, "dominant_hand", header_line),
            drills=tuple(drills),
            age=header.get("age"),
        )
    except InvariantError as e:
        raise InvariantError(f"line {header_line}: {e}") from None


def iter_students(path: Union[str, Path]) -> Iterator[Union[float, StudentRecord]]:
    """
    Stream an ink file block by block.

    Yields the sampling rate first (the file's value or the default), then one
    StudentRecord per student block.

    Raises:
        InkFormatError: If a line is not a well-formed record
        InvariantError: If a record violates the data model
    """
    header: Optional[dict] = None
    header_line = 0
    drills: list[Drill] = []
    rate_seen = False

    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                if header is not None:
                    yield _build_student(header, header_line, drills)
                    header, drills = None, []
                continue

            record = _decode_line(line, line_no)

            if "sample_rate_hz" in record and "student_id" not in record:
                if rate_seen or header is not None:
                    raise InkFormatError(line_no, "sample rate must be the first record")
                rate = record["sample_rate_hz"]
                if not isinstance(rate, (int, float)) or isinstance(rate, bool):
                    raise InkFormatError(line_no, "'sample_rate_hz' must be a number")
                rate_seen = True
                yield float(rate)
                continue

            if not rate_seen:
                rate_seen = True
                yield DEFAULT_SAMPLE_RATE_HZ

            if "student_id" in record:
                if header is not None:
                    raise InkFormatError(line_no, "student header must follow a blank line")
                header, header_line = record, line_no
            elif "drill_id" in record:
                if header is None:
                    raise InkFormatError(line_no, "drill record outside a student block")
                drills.append(_build_drill(record, line_no, str(header.get("student_id"))))
            else:
                raise InkFormatError(line_no, "record is neither a student header nor a drill")

    if header is not None:
        yield _build_student(header, header_line, drills)


def parse_cohort(path: Union[str, Path]) -> Cohort:
    """
    Parse and validate a cohort file.

    Args:
        path: Ink file path

    Returns:
        Cohort: Fully validated cohort

    Raises:
        InkFormatError: Malformed record (line number in the message)
        InvariantError: Invariant violation or duplicate student id
    """
    stream = iter_students(path)
    sample_rate = next(stream, DEFAULT_SAMPLE_RATE_HZ)
    return Cohort(students=tuple(stream), sample_rate_hz=sample_rate)


def _student_header(student: StudentRecord) -> dict:
    header = {
        "student_id": student.student_id,
        "grade": int(student.grade),
        "gender": student.gender.value,
        "writing_hand": student.writing_hand.value,
        "dominant_hand": student.dominant_hand.value,
    }
    if student.age is not None:
        header["age"] = student.age
    return header


def _drill_record(drill: Drill) -> dict:
    return {
        "drill_id": drill.drill_id,
        "n_questions": int(drill.n_questions),
        "n_correct": int(drill.n_correct),
        "strokes": [stroke.points.tolist() for stroke in drill.strokes],
    }


def _dumps(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), ensure_ascii=False)


def write_cohort(cohort: Cohort, path: Union[str, Path]) -> None:
    """
    Write a cohort in the ink file format. Floats use the shortest round-trip
    representation, so parse_cohort(path) reproduces the cohort exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_dumps({"sample_rate_hz": float(cohort.sample_rate_hz)}) + "\n")
        for index, student in enumerate(cohort.students):
            if index:
                handle.write("\n")
            handle.write(_dumps(_student_header(student)) + "\n")
            for drill in student.drills:
                handle.write(_dumps(_drill_record(drill)) + "\n")


def cohort_summary(cohort: Cohort, score_bins: int = 10) -> dict:
    """
    Describe a cohort: students per grade and gender, questions per drill,
    per-drill score ratios and per-student perfect ratios.

    Returns:
        Dict ready for JSON output
    """
    grades = {}
    for student in cohort.students:
        row = grades.setdefault(student.grade, {"grade": student.grade, "male": 0, "female": 0})
        row[student.gender.value] += 1
    grade_rows = []
    for grade in sorted(grades):
        row = grades[grade]
        row["total"] = row["male"] + row["female"]
        grade_rows.append(row)
    totals = {
        "grade": "all",
        "male": sum(r["male"] for r in grade_rows),
        "female": sum(r["female"] for r in grade_rows),
        "total": len(cohort.students),
    }

    drills = [drill for student in cohort.students for drill in student.drills]
    questions = np.array([d.n_questions for d in drills], dtype=int)
    values, counts = np.unique(questions, return_counts=True)
    ratios = np.array([score_ratio(d) for d in drills])
    hist, edges = np.histogram(ratios, bins=score_bins, range=(0.0, 1.0))
    perfect = np.array([perfect_ratio(s) for s in cohort.students])

    summary = {
        "n_students": len(cohort.students),
        "n_drills": len(drills),
        "n_strokes": sum(len(d.strokes) for d in drills),
        "sample_rate_hz": cohort.sample_rate_hz,
        "grades": grade_rows + [totals],
        "questions_per_drill": {int(v): int(c) for v, c in zip(values, counts)},
        "score_ratio_histogram": [
            {"low": float(lo), "high": float(hi), "count": int(c)}
            for lo, hi, c in zip(edges[:-1], edges[1:], hist)
        ],
        "perfect_drill_share": float(np.mean(ratios == 1.0)) if len(ratios) else 0.0,
        "perfect_ratio": {
            "mean": float(perfect.mean()),
            "median": float(np.median(perfect)),
            "above_threshold": float(np.mean(perfect > PERFORMANCE_THRESHOLD)),
        },
    }
    ages = [s.age for s in cohort.students if s.age is not None]
    if ages:
        summary["age"] = {"min": float(min(ages)), "max": float(max(ages)), "mean": float(np.mean(ages))}
    return summary
