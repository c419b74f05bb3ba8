"""
Runs one validated experiment end to end and records what it produced.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

from loguru import logger

from src.cli_harness import __version__
from src.cli_harness.config import ExperimentConfig
from src.cli_harness.experiments import DRIVERS
from src.cli_harness.outputs import MANIFEST_NAME, OutputStage


@dataclass(frozen=True)
class RunManifest:
    config: dict
    version: str
    wall_time: float
    rows_per_scale: dict = field(default_factory=dict)
    digests: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return asdict(self)


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """
    Execute the experiment named by ``config.kind`` and commit its outputs.

    Every output file is staged first; the manifest, written last, lists
    the sha256 of each of them. Outputs depend only on the configuration
    and the seed, never on the worker count.

    Args:
        config: validated experiment configuration.

    Returns:
        RunManifest, also written to ``<out>/manifest.json``.

    Raises:
        SimulationAbort: a path could not be resolved at the requested scale.
            No output is left behind in that case, nor on any other failure.
    """
    logger.info(
        f"Running '{config.kind}' in d={config.d}: scales {list(config.scales)}, "
        f"{config.trials} trials, seed {config.seed}, {config.workers} workers."
    )
    started = time.perf_counter()
    with OutputStage(config.out, config.kind) as stage:
        rows = DRIVERS[config.kind](config, stage)
        manifest = RunManifest(
            config=config.to_record(),
            version=__version__,
            wall_time=time.perf_counter() - started,
            rows_per_scale=rows,
            digests=stage.digests(),
        )
        stage.write_json(MANIFEST_NAME.removesuffix(".json"), manifest.to_record())
    logger.success(f"Experiment '{config.kind}' finished in {manifest.wall_time:.1f} s.")
    return manifest
