"""
Command-line entry point: one subcommand per experiment kind.

    python main.py xi --config experiments/xi.yaml --workers 8
    python main.py ruin --dim 3 --seed 7 --out output_files/ruin3
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import click
from loguru import logger

from src.brownian_coupling.errors import SimulationAbort
from src.cli_harness import __version__
from src.cli_harness.config import ConfigError, default_config_text, load_config, validate_config
from src.cli_harness.logging_setup import setup_logging
from src.cli_harness.runner import run_experiment

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_ABORT = 3
EXIT_INTERRUPT = 130

COMMANDS = {
    "xi": "xi",
    "onepoint": "one_point",
    "twopoint": "two_point",
    "moments": "moments",
    "cutball": "cutball",
    "couple": "couple",
    "l2box": "l2box",
    "boxdim": "dimension",
    "ruin": "ruin",
    "beurling": "beurling",
}


def execute(kind: str, config_path: Optional[Path], overrides: dict) -> int:
    """Validate, run and map the outcome to an exit code."""
    try:
        if config_path is None:
            config = validate_config(default_config_text(kind), overrides)
        else:
            config = load_config(config_path, overrides)
        if config.kind != kind:
            raise ConfigError([f"experiment.kind: file describes '{config.kind}', this command runs '{kind}'"])
        manifest = run_experiment(config)
    except ConfigError as exc:
        for error in exc.errors:
            logger.error(error)
        return EXIT_CONFIG
    except SimulationAbort as exc:
        logger.error(f"Simulation aborted: {exc}")
        return EXIT_ABORT
    except KeyboardInterrupt:
        logger.warning("Interrupted; no outputs were written.")
        return EXIT_INTERRUPT
    except Exception:
        logger.exception(f"Experiment '{kind}' failed.")
        return EXIT_FAILURE
    logger.info(f"Manifest: {len(manifest.digests)} outputs in '{config.out}'.")
    return EXIT_OK


def experiment_options(func):
    """Options shared by every experiment command."""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="YAML experiment file."),
        click.option("--seed", type=int, default=None, help="Master seed."),
        click.option("--workers", type=int, default=None, help="Worker processes (default $CUTLAB_WORKERS or all cores)."),
        click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None, help="Output directory."),
        click.option("--dim", "d", type=int, default=None, help="Dimension, 2 or 3."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group()
@click.version_option(__version__, prog_name="cutlab")
@click.option("--log-dir", type=click.Path(file_okay=False, path_type=Path), default=Path("logs"), show_default=True)
@click.option("--log-level", default="INFO", show_default=True)
def cli(log_dir: Path, log_level: str):
    """Monte Carlo experiments on random-walk and Brownian cut points."""
    setup_logging(log_dir, log_level)


def _register(name: str, kind: str) -> None:
    """Add the command ``name`` running experiments of ``kind``."""
    @cli.command(name=name, help=f"Run the '{kind}' experiment.")
    @experiment_options
    @click.pass_context
    def command(ctx, config_path, seed, workers, out, d):
        overrides = {"seed": seed, "workers": workers, "out": None if out is None else out.as_posix(), "d": d}
        ctx.exit(execute(kind, config_path, overrides))


for _name, _kind in COMMANDS.items():
    _register(_name, _kind)
