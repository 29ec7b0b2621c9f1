"""Evaluate command: cross-validated prediction tasks and the report bundle."""
from dataclasses import replace
from pathlib import Path
from typing import Optional

import typer

from ..config import PipelineConfig, load_pipeline_config
from ..errors import ConfigError
from ..evaluation import Task, TaskSpec, run_task, snrc_by_grade, write_report
from ..features import Family, read_feature_table
from ..output import handle_error, print_json, print_success, print_table

METRIC_DISPLAY = ["task", "family", "model", "n", "r2", "rmse", "acc", "f1", "auc", "baseline"]


def family_of(path: Path) -> str:
    stem = Path(path).stem
    if not stem.startswith("features_"):
        raise ConfigError(f"{path}: expected a features_<family>.csv file")
    family = stem[len("features_"):]
    if family not in {f.value for f in Family}:
        raise ConfigError(f"{path}: unknown feature family '{family}'")
    return family


def _models_for(task: str, models: tuple, explicit: bool) -> list:
    if task != Task.GRADE.value:
        return list(models)
    if explicit and "logistic" in models:
        raise ConfigError("the grade task is a regression; use --model linear or forest")
    return [m for m in models if m != "logistic"]


def run_evaluate(
    cfg: PipelineConfig,
    tables: Optional[list] = None,
    explicit_models: bool = False,
    dump_models: bool = False,
) -> list[dict]:
    """
    Run every configured (family, task, model) and write the report bundle.

    Returns:
        Pooled metric rows
    """
    seed = cfg.require_seed()
    paths = [Path(p) for p in tables] if tables else [cfg.features_path(f) for f in cfg.families]
    report_dir = cfg.path("report_dir")
    reports = []
    snrc = None
    for path in paths:
        family = family_of(path)
        table = read_feature_table(path)
        if table.empty:
            raise ConfigError(f"{path} has no rows")
        if family == Family.SIGLOG.value:
            snrc = snrc_by_grade(table)
        for task in cfg.tasks:
            models = _models_for(task, cfg.models, explicit_models)
            spec = TaskSpec(Task(task), family, tuple(models))
            for model in models:
                reports.append(run_task(table, spec, model, seed, cfg.forest))
    write_report(reports, report_dir, snrc=snrc, dump_models=dump_models)
    return [
        {k: v for k, v in row.items() if k != "scope"}
        for r in reports
        for row in r.metric_rows()
        if row["scope"] == "pooled"
    ]


def evaluate(
    tables: Optional[list[Path]] = typer.Argument(
        None,
        help="features_<family>.csv files (default: every configured family under <out>)",
    ),
    task: Optional[Task] = typer.Option(None, "--task", help="Prediction task (default: all configured)"),
    model: Optional[str] = typer.Option(None, "--model", "-m", help="linear, logistic or forest"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML pipeline config file"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Seed for folds and forests (required)"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    n_trees: Optional[int] = typer.Option(None, "--n-trees", help="Trees per forest"),
    dump_models: bool = typer.Option(False, "--dump-models", help="Write every fold's fitted model as JSON"),
    threads: Optional[int] = typer.Option(None, "--threads", "-j", help="Worker threads for forests"),
    table: bool = typer.Option(
        False,
        "--table",
        "-t",
        help="Display output as a formatted table instead of JSON",
    ),
):
    """
    Cross-validate the grade, gender and performance tasks.

    Writes metrics.csv, confusion matrices, grade scatter data, SNR/C by grade
    and per-fold feature selections to <out>/report.

    Examples:
        siglog evaluate --seed 7
        siglog evaluate siglog-out/features_siglog.csv --task grade --model forest --seed 7
        siglog evaluate --task gender --model logistic --seed 7 --table
    """
    try:
        cfg = load_pipeline_config(
            str(config) if config else None,
            seed=seed,
            out_dir=str(out) if out else None,
            threads=threads,
        )
        if task:
            cfg = replace(cfg, tasks=(task.value,))
        if model:
            cfg = replace(cfg, models=(model,))
        if n_trees:
            cfg = replace(cfg, forest=replace(cfg.forest, n_trees=n_trees))
        rows = run_evaluate(cfg, tables, explicit_models=model is not None, dump_models=dump_models)
        print_success(f"Wrote report bundle to {cfg.path('report_dir')}")

        if table:
            print_table(rows, METRIC_DISPLAY)
        else:
            print_json(rows)

    except Exception as e:
        exit_code = handle_error(e)
        raise typer.Exit(exit_code)
