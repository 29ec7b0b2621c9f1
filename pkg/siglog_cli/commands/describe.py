"""Describe command: cohort composition summary."""
from pathlib import Path
from typing import Optional

import typer

from ..config import load_pipeline_config
from ..errors import ConfigError
from ..ink import cohort_summary, parse_cohort
from ..output import handle_error, print_json, print_table


def describe(
    cohort: Optional[Path] = typer.Argument(None, help="Ink cohort file (default: <out>/cohort.ink.jsonl)"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML pipeline config file"),
    score_bins: int = typer.Option(10, "--score-bins", help="Bins of the per-drill score histogram"),
    table: bool = typer.Option(
        False,
        "--table",
        "-t",
        help="Display the students-per-grade table instead of JSON",
    ),
):
    """
    Summarize a cohort: students per grade and gender, questions per drill,
    score ratios and the share of students above the 0.45 perfect-ratio threshold.

    Examples:
        siglog describe siglog-out/cohort.ink.jsonl
        siglog describe --table
    """
    try:
        cfg = load_pipeline_config(str(config) if config else None)
        data = parse_cohort(cohort or cfg.path("cohort"))
        if not len(data):
            raise ConfigError("cohort has no students")
        summary = cohort_summary(data, score_bins=score_bins)

        if table:
            print_table(summary["grades"], ["grade", "male", "female", "total"])
        else:
            print_json(summary)

    except Exception as e:
        exit_code = handle_error(e)
        raise typer.Exit(exit_code)
