"""Tests for the handwriting data model and the ink file format."""
import json

import numpy as np
import pytest

from siglog_cli.errors import InkFormatError, InvariantError
from siglog_cli.ink import (
    Cohort,
    Drill,
    Gender,
    cohort_summary,
    parse_cohort,
    perfect_ratio,
    score_ratio,
    write_cohort,
)
from siglog_cli.synth import MaturationProfile, generate_cohort

from .conftest import line_stroke, make_stroke, make_student


class TestStroke:
    def test_requires_two_samples(self):
        with pytest.raises(InvariantError, match="at least 2"):
            make_stroke([0.0], [0.0])

    def test_rejects_non_monotonic_time(self):
        with pytest.raises(InvariantError, match="non-monotonic t"):
            make_stroke([0.0, 0.01, 0.01], [0.0, 1.0, 2.0])

    def test_rejects_pressure_out_of_range(self):
        with pytest.raises(InvariantError, match="pressure"):
            make_stroke([0.0, 0.01], [0.0, 1.0], pressure=1.5)

    def test_rejects_tilt_out_of_range(self):
        with pytest.raises(InvariantError, match="tilt"):
            make_stroke([0.0, 0.01], [0.0, 1.0], tilt_x=91.0)

    def test_points_are_read_only(self):
        stroke = line_stroke()
        with pytest.raises(ValueError):
            stroke.points[0, 0] = 1.0

    def test_channel_views(self):
        stroke = make_stroke([0.0, 0.5], [1.0, 2.0], y=[3.0, 4.0], pressure=0.25)
        np.testing.assert_array_equal(stroke.t, [0.0, 0.5])
        np.testing.assert_array_equal(stroke.xy, [[1.0, 3.0], [2.0, 4.0]])
        np.testing.assert_array_equal(stroke.pressure, [0.25, 0.25])
        assert stroke.samples[1].x == 2.0


class TestScores:
    @pytest.mark.parametrize(
        "n_correct, n_questions, expected",
        [(5, 5, 1.0), (0, 8, 0.0), (3, 4, 0.75)],
    )
    def test_score_ratio(self, n_correct, n_questions, expected):
        drill = Drill("d", (line_stroke(),), n_questions=n_questions, n_correct=n_correct)
        assert score_ratio(drill) == expected

    def test_perfect_ratio_nine_of_twenty(self):
        drills = [
            Drill(f"d{i:02d}", (line_stroke(),), n_questions=4, n_correct=4 if i < 9 else 3)
            for i in range(20)
        ]
        student = make_student(drills=drills)
        assert perfect_ratio(student) == 0.45

    def test_perfect_ratio_extremes(self):
        assert perfect_ratio(make_student(n_correct=5)) == 1.0
        assert perfect_ratio(make_student(n_correct=0)) == 0.0

    def test_drill_invariants(self):
        with pytest.raises(InvariantError, match="n_questions"):
            Drill("d", (line_stroke(),), n_questions=21, n_correct=0)
        with pytest.raises(InvariantError, match="n_correct"):
            Drill("d", (line_stroke(),), n_questions=3, n_correct=4)
        with pytest.raises(InvariantError, match="no strokes"):
            Drill("d", (), n_questions=3, n_correct=1)


class TestStudentAndCohort:
    def test_grade_range(self):
        with pytest.raises(InvariantError, match="grade"):
            make_student(grade=10)

    def test_empty_drills_rejected(self):
        with pytest.raises(InvariantError, match="no drills"):
            make_student(drills=[])

    def test_gender_coerced_to_enum(self):
        assert make_student(gender="male").gender is Gender.MALE

    def test_duplicate_student_ids(self):
        with pytest.raises(InvariantError, match="duplicate"):
            Cohort(students=(make_student("a"), make_student("a")))

    def test_lookup_by_id(self):
        cohort = Cohort(students=(make_student("a"), make_student("b", grade=5)))
        assert cohort.student("b").grade == 5
        assert len(cohort) == 2


class TestFileFormat:
    def test_minimal_file(self, tmp_path):
        path = tmp_path / "one.ink.jsonl"
        header = {"student_id": "s1", "grade": 2, "gender": "male", "writing_hand": "left", "dominant_hand": "left"}
        drill = {
            "drill_id": "d1",
            "n_questions": 3,
            "n_correct": 2,
            "strokes": [[[0.0, 0, 0, 0, 0.5, 0, 0, 0.1], [0.01, 1, 0, 0, 0.5, 0, 0, 0.1], [0.02, 2, 0, 0, 0.5, 0, 0, 0.1]]],
        }
        path.write_text(json.dumps(header) + "\n" + json.dumps(drill) + "\n", encoding="utf-8")

        cohort = parse_cohort(path)

        assert len(cohort) == 1
        assert cohort.sample_rate_hz == 480.0
        assert len(cohort.student("s1").drills[0].strokes[0]) == 3

    def test_non_monotonic_stroke_in_file(self, tmp_path):
        path = tmp_path / "bad.ink.jsonl"
        header = {"student_id": "s1", "grade": 2, "gender": "male", "writing_hand": "left", "dominant_hand": "left"}
        drill = {
            "drill_id": "d1",
            "n_questions": 3,
            "n_correct": 2,
            "strokes": [[[0.02, 0, 0, 0, 0.5, 0, 0, 0], [0.01, 1, 0, 0, 0.5, 0, 0, 0]]],
        }
        path.write_text(json.dumps(header) + "\n" + json.dumps(drill) + "\n", encoding="utf-8")
        with pytest.raises(InvariantError, match="line 2.*non-monotonic t"):
            parse_cohort(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "broken.ink.jsonl"
        path.write_text('{"sample_rate_hz": 480}\n{"student_id": \n', encoding="utf-8")
        with pytest.raises(InkFormatError) as excinfo:
            parse_cohort(path)
        assert excinfo.value.line_no == 2

    def test_drill_outside_block(self, tmp_path):
        path = tmp_path / "orphan.ink.jsonl"
        path.write_text('{"drill_id": "d", "n_questions": 1, "n_correct": 1, "strokes": []}\n', encoding="utf-8")
        with pytest.raises(InkFormatError, match="outside a student block"):
            parse_cohort(path)

    def test_empty_file_gives_empty_cohort(self, tmp_path):
        path = tmp_path / "empty.ink.jsonl"
        path.write_text("", encoding="utf-8")
        assert len(parse_cohort(path)) == 0

    def test_minimal_cohort_writes_one_header(self, tmp_path, minimal_cohort):
        path = tmp_path / "out.ink.jsonl"
        write_cohort(minimal_cohort, path)
        records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]
        assert sum("student_id" in r for r in records) == 1

    def test_round_trip_generated_cohort(self, tmp_path):
        cohort, _ = generate_cohort(MaturationProfile(), n_per_grade=2, drills_per_student=2, seed=3)
        first = tmp_path / "a.ink.jsonl"
        second = tmp_path / "b.ink.jsonl"

        write_cohort(cohort, first)
        parsed = parse_cohort(first)
        write_cohort(parsed, second)

        assert parsed == cohort
        assert first.read_bytes() == second.read_bytes()


class TestSummary:
    def test_counts_and_ratios(self):
        drills = [
            Drill("d1", (line_stroke(), line_stroke()), n_questions=4, n_correct=4),
            Drill("d2", (line_stroke(),), n_questions=5, n_correct=2),
        ]
        cohort = Cohort(students=(make_student("a", drills=drills), make_student("b", gender="male", grade=4)))

        summary = cohort_summary(cohort, score_bins=5)

        assert summary["n_students"] == 2
        assert summary["n_drills"] == 3
        assert summary["n_strokes"] == 4
        assert summary["questions_per_drill"] == {4: 1, 5: 2}
        assert summary["grades"][-1] == {"grade": "all", "male": 1, "female": 1, "total": 2}
        assert sum(b["count"] for b in summary["score_ratio_histogram"]) == 3
        assert summary["perfect_ratio"]["mean"] == pytest.approx(0.75)
