"""Synth command: generate a synthetic cohort with ground truth."""
from dataclasses import replace
from pathlib import Path
from typing import Optional

import typer

from ..config import PipelineConfig, load_pipeline_config
from ..ink import write_cohort
from ..output import handle_error, print_json, print_success, print_table
from ..synth import calibrate_noise, generate_cohort


def run_synth(cfg: PipelineConfig) -> dict:
    """Generate and write the cohort and ground-truth files described by cfg."""
    seed = cfg.require_seed()
    settings = cfg.synth
    profile = settings.profile
    if settings.null_effects:
        profile = profile.without_effects()

    result = {}
    if settings.calibrate_snr is not None:
        profile, factor, snr = calibrate_noise(
            profile, settings.calibrate_snr, seed, cfg=cfg.fit, sample_rate_hz=settings.sample_rate_hz
        )
        result["noise_scale"] = factor
        result["calibration_snr_db"] = snr

    cohort, truth = generate_cohort(
        profile,
        settings.n_per_grade,
        settings.drills_per_student,
        seed,
        sample_rate_hz=settings.sample_rate_hz,
        threads=cfg.threads,
    )
    cohort_path = cfg.path("cohort")
    truth_path = cfg.path("ground_truth")
    write_cohort(cohort, cohort_path)
    truth.write(truth_path)

    drills = [d for s in cohort for d in s.drills]
    result.update(
        {
            "cohort": str(cohort_path),
            "ground_truth": str(truth_path),
            "students": len(cohort),
            "drills": len(drills),
            "strokes": sum(len(d.strokes) for d in drills),
            "seed": seed,
        }
    )
    return result


def synth(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML pipeline config file"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Random seed (required)"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    n_per_grade: Optional[int] = typer.Option(None, "--n-per-grade", help="Students per grade"),
    drills: Optional[int] = typer.Option(None, "--drills", help="Drills per student"),
    calibrate_snr: Optional[float] = typer.Option(
        None,
        "--calibrate-snr",
        help="Scale generator noise so the mean extraction SNR approaches this value (dB)",
    ),
    null_effects: bool = typer.Option(
        False,
        "--null-effects",
        help="Remove gender and performance effects from the generator",
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
    Generate a synthetic cohort in the ink file format.

    Writes <out>/cohort.ink.jsonl and <out>/ground_truth.jsonl.

    Examples:
        siglog synth --seed 7
        siglog synth --seed 7 --n-per-grade 4 --drills 3 --out demo
        siglog synth --seed 7 --calibrate-snr 27
    """
    try:
        cfg = load_pipeline_config(
            str(config) if config else None,
            seed=seed,
            out_dir=str(out) if out else None,
            threads=threads,
        )
        updates = {
            "n_per_grade": n_per_grade,
            "drills_per_student": drills,
            "calibrate_snr": calibrate_snr,
            "null_effects": True if null_effects else None,
        }
        cfg = replace(cfg, synth=replace(cfg.synth, **{k: v for k, v in updates.items() if v is not None}))
        result = run_synth(cfg)
        print_success(f"Wrote {result['students']} students to {result['cohort']}")

        if table:
            print_table([result], ["cohort", "students", "drills", "strokes", "seed"])
        else:
            print_json(result)

    except Exception as e:
        exit_code = handle_error(e)
        raise typer.Exit(exit_code)
