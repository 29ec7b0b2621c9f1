"""Main entry point for the siglog CLI."""
import typer
from typing import Optional

from . import __version__
from .commands import describe, evaluate, features, fit, report, run_all, synth
from .errors import ConfigError, PipelineError
from .output import install_warning_hook, print_error

# Create main Typer app
app = typer.Typer(
    name="siglog",
    help="Handwriting kinematics pipeline: sigma-lognormal fitting, feature families and student-level prediction",
    add_completion=True,
)

app.command("synth")(synth.synth)
app.command("describe")(describe.describe)
app.command("fit")(fit.fit)
app.command("features")(features.features)
app.command("evaluate")(evaluate.evaluate)
app.command("report")(report.report)
app.command("run-all")(run_all.run_all)


@app.callback(invoke_without_command=True)
def callback(
    ctx: typer.Context,
    version: Optional[bool] = typer.Option(
        None,
        "--version",
        "-v",
        help="Show version and exit",
        is_eager=True,
    ),
):
    """
    siglog - analyze children's online handwriting from the command line.

    Stages read and write plain files under the output directory, so each
    one can be run on its own or chained with run-all.

    Settings come from --config (YAML), then SIGLOG_* environment variables
    (a .env file in the working directory is loaded):
    - SIGLOG_CONFIG - default config file
    - SIGLOG_SEED - default seed
    - SIGLOG_THREADS - default worker count
    - SIGLOG_OUT - default output directory

    Examples:
        siglog synth --seed 7 --n-per-grade 4 --drills 3
        siglog fit siglog-out/cohort.ink.jsonl
        siglog features --family siglog --table
        siglog evaluate --task grade --seed 7
        siglog run-all --seed 7
    """
    install_warning_hook()

    if version:
        typer.echo(f"siglog-cli version {__version__}")
        raise typer.Exit()

    # Show help if no command provided
    if ctx.invoked_subcommand is None:
        typer.echo(ctx.get_help())
        raise typer.Exit()


def main():
    """Main entry point for the CLI application."""
    try:
        app()
    except ConfigError as e:
        print_error(str(e))
        raise typer.Exit(2)
    except PipelineError as e:
        print_error(str(e))
        raise typer.Exit(1)
    except KeyboardInterrupt:
        typer.echo("\nAborted!", err=True)
        raise typer.Exit(130)
    except Exception as e:
        typer.echo(f"Unexpected error: {e}", err=True)
        raise typer.Exit(1)


if __name__ == "__main__":
    main()
