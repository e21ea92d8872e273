import logging
from pathlib import Path
from typing import Optional

import typer

from services.errors import ConfigurationError
from utils.config import ExperimentConfig, load_config
from utils.csv_output import write_csv

logger = logging.getLogger(__name__)

ConfigOption = typer.Option(..., "--config", exists=True, dir_okay=False, help="Experiment config file")
PolicyOption = typer.Option(None, "--policy", help="chernoff, correlation, correlation-exhaustive or random")
AlphaOption = typer.Option(None, "--alpha", help="False-alarm budget")
BetaOption = typer.Option(None, "--beta", help="Missed-detection budget")
TrialsOption = typer.Option(None, "--trials", help="Trials per hypothesis")
SeedOption = typer.Option(None, "--seed", help="Base seed (required here or in the config)")
OutOption = typer.Option(None, "--out", help="CSV output path; stdout when omitted")
SubsetOption = typer.Option(None, "--max-subset-size", help="Subset cap of the exhaustive search")
WorkersOption = typer.Option(None, "--workers", help="Worker processes for the trials")


def load_experiment(config_path: Path, **flags) -> tuple[ExperimentConfig, str]:
    """Config with CLI flags applied; model file paths resolve against the config's directory."""
    overrides = {key: value for key, value in flags.items() if value is not None}
    return load_config(str(config_path), overrides=overrides), str(config_path.parent)


def report_error(command: str, e: Exception) -> None:
    """Print a diagnostic and exit: 2 for bad input, 1 for anything unexpected."""
    if isinstance(e, ValueError):
        messages = e.errors if isinstance(e, ConfigurationError) else [str(e)]
        logger.error(f"{command} failed: {'; '.join(messages)}")
        for message in messages:
            typer.echo(f"error: {message}", err=True)
        raise typer.Exit(code=2)
    logger.exception(f"Unexpected error during {command}: {e}")
    typer.echo(f"error: unexpected failure in {command}: {e}", err=True)
    raise typer.Exit(code=1)


def emit(rows: list[dict], columns: list[str], out: Optional[str]) -> None:
    text = write_csv(rows, columns, out)
    if not out:
        typer.echo(text, nl=False)
