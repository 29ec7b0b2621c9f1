"""Features command: student-level feature tables per family."""
from dataclasses import replace
from pathlib import Path
from typing import Optional

import typer

from ..config import PipelineConfig, load_pipeline_config
from ..errors import ConfigError
from ..features import ID_COLUMNS, Family, FeatureSettings, feature_table, fits_by_drill, write_feature_table
from ..ink import parse_cohort
from ..lognorm import read_fit_results
from ..output import handle_error, print_json, print_success, print_table


def run_features(
    cfg: PipelineConfig,
    families: list,
    cohort_path: Optional[Path] = None,
    fits_path: Optional[Path] = None,
) -> list[dict]:
    """
    Compute and write features_<family>.csv for each family.

    Siglog features reuse the fit results file when one exists.
    """
    cohort = parse_cohort(cohort_path or cfg.path("cohort"))
    if not len(cohort):
        raise ConfigError("cohort has no students")

    fits = None
    if Family.SIGLOG.value in families:
        path = Path(fits_path) if fits_path else cfg.path("fits")
        if fits_path and not path.exists():
            raise ConfigError(f"fit results file {path} does not exist")
        if path.exists():
            fits = fits_by_drill(read_fit_results(path))

    results = []
    for family in families:
        settings = FeatureSettings(
            family=Family(family),
            n_bins=cfg.n_bins,
            entropy_binning=cfg.entropy_binning,
            snr_aggregation=cfg.snr_aggregation,
            fit=cfg.fit,
        )
        table = feature_table(cohort, settings, threads=cfg.threads, fits=fits if family == Family.SIGLOG.value else None)
        path = cfg.features_path(family)
        write_feature_table(table, path)
        results.append(
            {
                "family": family,
                "path": str(path),
                "students": len(table),
                "features": len(table.columns) - len(ID_COLUMNS),
            }
        )
    return results


def features(
    cohort: Optional[Path] = typer.Argument(None, help="Ink cohort file (default: <out>/cohort.ink.jsonl)"),
    family: Optional[Family] = typer.Option(
        None,
        "--family",
        "-f",
        help="Feature family (default: every family in the config)",
    ),
    fits: Optional[Path] = typer.Option(
        None,
        "--fits",
        help="Reuse a fit results file for siglog features (default: <out>/fits.jsonl when present)",
    ),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML pipeline config file"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    n_bins: Optional[int] = typer.Option(None, "--n-bins", help="Entropy histogram bins"),
    entropy_binning: Optional[str] = typer.Option(
        None,
        "--entropy-binning",
        help="Entropy bin ranges per 'drill' or shared by the 'cohort'",
    ),
    snr_aggregation: Optional[str] = typer.Option(
        None,
        "--snr-aggregation",
        help="Average SNR per 'stroke' or pool it per 'drill'",
    ),
    threads: Optional[int] = typer.Option(None, "--threads", "-j", help="Worker processes"),
    table: bool = typer.Option(
        False,
        "--table",
        "-t",
        help="Display output as a formatted table instead of JSON",
    ),
):
    """
    Compute student-level feature tables (features_<family>.csv).

    basic and entropy tables hold <feature>_avg and <feature>_sd columns;
    siglog tables hold <feature>_avg only.

    Examples:
        siglog features
        siglog features --family siglog --fits siglog-out/fits.jsonl
        siglog features -f entropy --n-bins 32 --table
    """
    try:
        cfg = load_pipeline_config(
            str(config) if config else None,
            out_dir=str(out) if out else None,
            threads=threads,
            n_bins=n_bins,
            entropy_binning=entropy_binning,
            snr_aggregation=snr_aggregation,
        )
        families = [family.value] if family else list(cfg.families)
        cfg = replace(cfg, families=tuple(families))
        results = run_features(cfg, families, cohort, fits)
        for r in results:
            print_success(f"Wrote {r['features']} {r['family']} features for {r['students']} students to {r['path']}")

        if table:
            print_table(results, ["family", "students", "features", "path"])
        else:
            print_json(results)

    except Exception as e:
        exit_code = handle_error(e)
        raise typer.Exit(exit_code)
