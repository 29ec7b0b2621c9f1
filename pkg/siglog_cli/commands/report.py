"""Report command: render the SVG plots of a report bundle."""
from pathlib import Path
from typing import Optional

import typer

from ..config import load_pipeline_config
from ..output import handle_error, print_json, print_success, print_table
from ..report import render_bundle


def report(
    bundle: Optional[Path] = typer.Argument(None, help="Report bundle directory (default: <out>/report)"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML pipeline config file"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    table: bool = typer.Option(
        False,
        "--table",
        "-t",
        help="Display output as a formatted table instead of JSON",
    ),
):
    """
    Render grade scatter plots, the SNR/C-by-grade box plot and confusion heat maps.

    Examples:
        siglog report
        siglog report siglog-out/report --table
    """
    try:
        cfg = load_pipeline_config(str(config) if config else None, out_dir=str(out) if out else None)
        written = render_bundle(bundle or cfg.path("report_dir"))
        print_success(f"Rendered {len(written)} plots")
        rows = [{"plot": str(p)} for p in written]

        if table:
            print_table(rows, ["plot"])
        else:
            print_json(rows)

    except Exception as e:
        exit_code = handle_error(e)
        raise typer.Exit(exit_code)
