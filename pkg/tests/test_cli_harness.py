import json
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner
from loguru import logger

from src.brownian_coupling.errors import SimulationAbort
from src.cli_harness import __version__
from src.cli_harness import cli as cli_module
from src.cli_harness import runner
from src.cli_harness.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_INTERRUPT, EXIT_OK, cli, execute
from src.cli_harness.config import KINDS, ConfigError, default_config_text, load_config, validate_config
from src.cli_harness.experiments import file_tag, fit_payload
from src.cli_harness.outputs import MANIFEST_NAME, OutputStage, dump_json, read_table, schema_tag, verify_digests
from src.cli_harness.runner import run_experiment

RUIN_CONFIG = """
experiment:
  kind: ruin
  scales: [1, 2]
  trials: 300
  seed: 3
ruin:
  l: [1, 2]
"""


def config_errors(text, overrides=None):
    with pytest.raises(ConfigError) as info:
        validate_config(text, overrides)
    return info.value.errors


# --- 1. Configuration ---

def test_empty_file_lists_every_required_field():
    errors = config_errors("")
    assert any("'kind' is a required property" in e for e in errors)
    assert any("'scales' is a required property" in e for e in errors)


def test_unsupported_dimension_is_named():
    errors = config_errors("experiment: {kind: xi, scales: [2], d: 4}")
    assert errors == ["experiment.d: 4 is not supported; supported dimensions are 2 and 3"]


def test_minimal_file_gets_defaults():
    config = validate_config("experiment: {kind: xi, scales: [2, 3]}")
    assert (config.d, config.trials, config.seed) == (2, 100_000, 0)
    assert config.params["indexing"] == "radius"
    assert config.xi == 1.25
    assert config.out == Path("output_files/xi")


def test_overrides_take_precedence():
    config = validate_config("experiment: {kind: one_point, scales: [4], seed: 1}\none_point: {strict_bulk: false}", {"seed": 5, "workers": None, "d": 3})
    assert config.seed == 5 and config.d == 3
    assert config.params["points"] == [[0.45, 0.0, 0.0]]
    assert validate_config("experiment: {kind: xi, scales: [2], d: 3, xi_override: 0.6}").xi == 0.6


def test_unknown_keys_and_stray_sections_are_rejected():
    assert any("Additional properties" in e for e in config_errors("experiment: {kind: xi, scales: [2], colour: red}"))
    errors = config_errors("experiment: {kind: xi, scales: [2]}\nruin: {l: [1]}")
    assert errors == ["ruin: section does not match experiment kind 'xi'"]


def test_semantic_errors_are_collected_together():
    errors = config_errors("experiment: {kind: xi, scales: [2.5, 1]}\nxi: {indexing: time}")
    assert len(errors) == 2
    assert errors[0].startswith("experiment.scales: scales must be sorted")


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("experiment: {kind: ruin, scales: [1, 2]}\nruin: {l: [1]}", "ruin.l"),
        ("experiment: {kind: beurling, scales: [6], d: 3}", "planar"),
        ("experiment: {kind: beurling, scales: [2]}", "beurling.x_dist"),
        ("experiment: {kind: one_point, scales: [4]}\none_point: {points: [[1.2, 0]]}", "strictly inside"),
        ("experiment: {kind: l2box, scales: [4]}\nl2box: {box: {k: [0, 0], n_box: 1}}", "not nice"),
        ("experiment: {kind: dimension, scales: [7]}\ndimension: {box_sizes: [0.1, 0.05, 0.02]}", "decades"),
        ("experiment: {kind: cutball, scales: [4]}\ncutball: {points: [[0.3, 0]]}", "does not fit"),
        ("[1, 2]", "expected a mapping"),
    ],
)
def test_invalid_values_are_reported(text, fragment):
    assert any(fragment in e for e in config_errors(text))


def test_bulk_points_are_strict_unless_opted_out():
    errors = config_errors("experiment: {kind: one_point, scales: [4]}")
    assert len(errors) == 1 and "strict_bulk" in errors[0] and errors[0].startswith("one_point.points.0")
    relaxed = validate_config("experiment: {kind: one_point, scales: [4]}\none_point: {strict_bulk: false}")
    assert relaxed.params["strict_bulk"] is False
    assert validate_config("experiment: {kind: one_point, scales: [8]}").params["strict_bulk"] is True


def test_two_point_separation_is_checked_at_the_smallest_scale():
    assert validate_config("experiment: {kind: two_point, scales: [6, 8]}").params["strict_bulk"] is True
    text = "experiment: {kind: two_point, scales: [6]}\ntwo_point: {z: [0.45, 0], w: [[0.45, 0.1]]}"
    assert any("two_point.w.0: |z - w|" in e for e in config_errors(text))
    assert config_errors(text.replace("0.1]]}", "0.1]], strict_bulk: false}")) == []


@pytest.mark.parametrize("kind", KINDS)
def test_default_config_of_every_kind_is_valid(kind):
    assert validate_config(default_config_text(kind)).kind == kind


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.yaml")


# --- 2. Outputs ---

def test_stage_commits_on_success(tmp_path):
    frame = pd.DataFrame({"n": [1.0, 2.0], "p_hat": [0.5, 1 / 3]})
    with OutputStage(tmp_path, "xi") as stage:
        stage.write_table("demo", frame)
        stage.write_json("meta", {"a": np.float64(1.5), "b": [np.int64(2)]})
        with pytest.raises(ValueError, match="twice"):
            stage.path("demo.csv")
    assert not (tmp_path / ".staging-xi").exists()
    assert (tmp_path / "demo.csv").read_text().splitlines()[0] == schema_tag("demo") == "# schema=cutlab/demo/v1"
    assert read_table(tmp_path / "demo.csv")["p_hat"].tolist() == pytest.approx([0.5, 1 / 3])
    assert json.loads((tmp_path / "meta.json").read_text()) == {"a": 1.5, "b": [2]}


def test_stage_leaves_nothing_on_failure(tmp_path):
    with pytest.raises(RuntimeError):
        with OutputStage(tmp_path, "ruin") as stage:
            stage.write_json("partial", {"x": 1})
            raise RuntimeError("boom")
    assert list(tmp_path.iterdir()) == []


def test_stale_staging_is_replaced(tmp_path):
    stale = tmp_path / ".staging-ruin"
    stale.mkdir()
    (stale / "old.json").write_text("{}")
    with OutputStage(tmp_path, "ruin") as stage:
        stage.write_json("new", {})
    assert sorted(p.name for p in tmp_path.iterdir()) == ["new.json"]


def test_json_refuses_nan():
    with pytest.raises(ValueError):
        dump_json({"x": math.nan})
    assert dump_json({"b": 1, "a": 2}).index('"a"') < dump_json({"b": 1, "a": 2}).index('"b"')


def test_fit_payload_reports_failed_fits():
    def failing():
        raise ValueError("need at least 3 points for a fit, got 2")

    payload = fit_payload("log p vs m", -1.25, failing)
    assert payload["fit"] is None
    assert "at least 3" in payload["reason"]
    assert file_tag(4.5) == "4p5"


# --- 3. Runs ---

def run_ruin(out, workers=1):
    config = validate_config(RUIN_CONFIG, {"out": str(out), "workers": workers})
    return run_experiment(config)


def test_ruin_run_writes_table_and_manifest(tmp_path):
    manifest = run_ruin(tmp_path)
    table = read_table(tmp_path / "ruin.csv")
    assert table["p_formula"].tolist() == pytest.approx([0.5, 0.5])
    assert table["trials"].tolist() == [300, 300]
    assert set(manifest.digests) == {"ruin.csv"}
    record = json.loads((tmp_path / MANIFEST_NAME).read_text())
    assert record["digests"] == manifest.digests
    assert record["version"] == __version__
    assert verify_digests(tmp_path) == []
    (tmp_path / "ruin.csv").write_text("tampered\n")
    assert verify_digests(tmp_path) == ["ruin.csv"]


def test_outputs_do_not_depend_on_worker_count(tmp_path):
    serial = run_ruin(tmp_path / "serial", workers=1)
    pooled = run_ruin(tmp_path / "pooled", workers=2)
    assert serial.digests == pooled.digests


def test_failed_run_keeps_previous_outputs(tmp_path, monkeypatch):
    run_ruin(tmp_path)
    before = (tmp_path / "ruin.csv").read_bytes()

    def abort(config, stage):
        stage.write_table("ruin", pd.DataFrame({"x": [1]}))
        raise SimulationAbort("path never left the ball")

    monkeypatch.setitem(runner.DRIVERS, "ruin", abort)
    with pytest.raises(SimulationAbort):
        run_ruin(tmp_path)
    assert (tmp_path / "ruin.csv").read_bytes() == before
    assert not (tmp_path / ".staging-ruin").exists()


# --- 4. Command line ---

@pytest.fixture(autouse=True)
def drop_log_sinks():
    yield
    # the CLI binds sinks to the runner's captured streams
    logger.remove()


def write_config(tmp_path, text=RUIN_CONFIG):
    target = tmp_path / "ruin.yaml"
    target.write_text(text)
    return target


def invoke(tmp_path, *args):
    return CliRunner().invoke(cli, ["--log-dir", str(tmp_path / "logs"), *args])


def test_cli_runs_an_experiment(tmp_path):
    result = invoke(tmp_path, "ruin", "--config", str(write_config(tmp_path)), "--workers", "1", "--out", str(tmp_path / "out"))
    assert result.exit_code == EXIT_OK
    assert (tmp_path / "out" / "ruin.csv").is_file()
    assert (tmp_path / "logs" / "cutlab.log").is_file()


def test_cli_config_errors_exit_with_two(tmp_path):
    bad = write_config(tmp_path, "experiment: {kind: ruin, scales: [1], d: 4}")
    assert invoke(tmp_path, "ruin", "--config", str(bad)).exit_code == EXIT_CONFIG
    # a file for another kind
    assert invoke(tmp_path, "xi", "--config", str(write_config(tmp_path))).exit_code == EXIT_CONFIG
    assert invoke(tmp_path, "ruin", "--config", str(tmp_path / "missing.yaml")).exit_code == EXIT_CONFIG


def test_cli_version():
    result = CliRunner().invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_abort_and_interrupt_exit_codes(tmp_path, monkeypatch):
    config_path = write_config(tmp_path)

    def abort(config):
        raise SimulationAbort("under-resolved")

    def interrupt(config):
        raise KeyboardInterrupt

    monkeypatch.setattr(cli_module, "run_experiment", abort)
    assert execute("ruin", config_path, {"out": str(tmp_path / "out")}) == EXIT_ABORT
    monkeypatch.setattr(cli_module, "run_experiment", interrupt)
    assert execute("ruin", config_path, {"out": str(tmp_path / "out")}) == EXIT_INTERRUPT
