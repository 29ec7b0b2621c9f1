"""Fit command: sigma-lognormal extraction for every stroke of a cohort."""
from pathlib import Path
from typing import Optional

import numpy as np
import typer

from ..config import PipelineConfig, load_pipeline_config
from ..errors import ConfigError
from ..features import fit_cohort
from ..ink import parse_cohort
from ..lognorm import write_fit_results
from ..output import handle_error, print_json, print_success, print_table


def fit_summary(records: list[dict]) -> dict:
    fitted = [r for r in records if "error" not in r]
    snr = np.array([r["snr_db"] for r in fitted], dtype=float)
    components = np.array([r["n_components"] for r in fitted], dtype=float)
    snr_over_c = snr / np.maximum(components, 1.0)
    return {
        "strokes": len(records),
        "fitted": len(fitted),
        "failed": len(records) - len(fitted),
        "snr_mean": float(snr.mean()) if snr.size else None,
        "snr_std": float(snr.std()) if snr.size else None,
        "components_mean": float(components.mean()) if components.size else None,
        "snr_over_c_mean": float(snr_over_c.mean()) if snr.size else None,
    }


def run_fit(cfg: PipelineConfig, cohort_path: Optional[Path] = None, output: Optional[Path] = None) -> dict:
    cohort = parse_cohort(cohort_path or cfg.path("cohort"))
    if not len(cohort):
        raise ConfigError("cohort has no students")
    records = fit_cohort(cohort, cfg.fit, cfg.threads)
    path = Path(output) if output else cfg.path("fits")
    write_fit_results(records, path)
    return {"fits": str(path), **fit_summary(records)}


def fit(
    cohort: Optional[Path] = typer.Argument(None, help="Ink cohort file (default: <out>/cohort.ink.jsonl)"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML pipeline config file"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    output: Optional[Path] = typer.Option(None, "--output", help="Fit results file (default: <out>/fits.jsonl)"),
    snr_reference: Optional[str] = typer.Option(
        None,
        "--snr-reference",
        help="Score reconstructions against the 'raw' or 'smoothed' speed",
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
    Extract lognormal components from every stroke.

    Writes one JSON line per stroke and prints the SNR summary (mean ± std).

    Examples:
        siglog fit
        siglog fit data/cohort.ink.jsonl --output data/fits.jsonl --threads 4
    """
    try:
        cfg = load_pipeline_config(
            str(config) if config else None,
            out_dir=str(out) if out else None,
            threads=threads,
            snr_reference=snr_reference,
        )
        result = run_fit(cfg, cohort, output)
        if result["snr_mean"] is not None:
            print_success(
                f"Fitted {result['fitted']}/{result['strokes']} strokes, "
                f"SNR {result['snr_mean']:.1f} ± {result['snr_std']:.1f} dB"
            )

        if table:
            print_table([result], ["strokes", "fitted", "failed", "snr_mean", "snr_std", "components_mean"])
        else:
            print_json(result)

    except Exception as e:
        exit_code = handle_error(e)
        raise typer.Exit(exit_code)
