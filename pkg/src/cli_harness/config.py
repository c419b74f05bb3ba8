"""
Experiment configuration: one YAML file describes one experiment.

    experiment:
      kind: xi              # required
      scales: [2, 3, 4]     # required, sorted ascending
      d: 2
      trials: 100000
      seed: 0
      workers: 8
      out: output_files/xi
      xi_override: 0.58
    xi:                     # optional section named after the kind
      indexing: radius
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml
from jsonschema import Draft202012Validator

from src.estimators.trial_pool import default_workers
from src.measures.box_dimension import check_box_sizes
from src.measures.boxes import NiceBox
from src.measures.occupation import default_xi
from src.walk_core.lattice_walk import check_bulk_point

KINDS = ("xi", "one_point", "two_point", "moments", "cutball", "couple", "l2box", "dimension", "ruin", "beurling")

DEFAULT_TRIALS = {
    "xi": 100_000,
    "one_point": 100_000,
    "moments": 100_000,
    "ruin": 100_000,
    "beurling": 100_000,
    "two_point": 10_000,
    "cutball": 10_000,
    "l2box": 10_000,
    "couple": 1_000,
    "dimension": 200,
}

DEFAULT_SCALES = {
    "xi": [2, 3, 4, 5, 6],
    "one_point": [4, 5, 6],
    "two_point": [6],
    "moments": [32, 64, 128, 256, 512, 1024],
    "cutball": [4, 5, 6],
    "couple": [3, 4, 5, 6],
    "l2box": [4, 5, 6],
    "dimension": [7],
    "ruin": [1, 1, 2],
    "beurling": [6],
}

OUTPUT_ROOT = Path("output_files")

# below n = 6 ln 2 no point of the unit ball is at distance e^{-n/6} from both 0 and the sphere
BULK_KINDS = ("one_point", "two_point", "cutball", "couple")
BULK_SCALE = 6 * math.log(2)


class ConfigError(Exception):
    """Every violation found in a configuration, as "location: message" strings."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


# --- 1. Schema ---

_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_POINT = {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 3}
_POINTS = {"type": "array", "items": _POINT, "minItems": 1}
_REPS = {"type": "integer", "minimum": 1}
_RHO = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.25}
_FLAG = {"type": "boolean"}
_BOX = {
    "type": "object",
    "properties": {
        "k": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 3},
        "n_box": {"type": "integer", "minimum": 0},
    },
    "required": ["k", "n_box"],
    "additionalProperties": False,
}


def _section(**properties) -> dict:
    """Closed object schema with the given properties."""
    return {"type": "object", "properties": properties, "additionalProperties": False}


EXPERIMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": list(KINDS)},
        "d": {"enum": [2, 3]},
        "scales": {"type": "array", "items": _NUMBER, "minItems": 1},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "workers": {"type": "integer", "minimum": 1},
        "out": {"type": "string", "minLength": 1},
        "xi_override": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
    },
    "required": ["kind", "scales"],
    "additionalProperties": False,
}

SECTION_SCHEMAS = {
    "xi": _section(indexing={"enum": ["radius", "time"]}, well_separated=_FLAG, bootstrap_reps=_REPS),
    "one_point": _section(
        points=_POINTS,
        boundary_sweep=_section(direction=_POINT, distances={"type": "array", "items": _POSITIVE, "minItems": 3}),
        bootstrap_reps=_REPS,
        strict_bulk=_FLAG,
    ),
    "two_point": _section(z=_POINT, w=_POINTS, box=_BOX, bootstrap_reps=_REPS, strict_bulk=_FLAG),
    "moments": _section(bootstrap_reps=_REPS),
    "cutball": _section(
        event={"enum": ["discrete", "continuous", "transfer"]},
        points=_POINTS,
        rho=_RHO,
        dt=_POSITIVE,
        bootstrap_reps=_REPS,
        strict_bulk=_FLAG,
    ),
    "couple": _section(
        dt={"type": "number", "exclusiveMinimum": 0, "maximum": 0.01},
        keep_every={"type": "integer", "minimum": 1},
        deviation_exponent=_POSITIVE,
        points=_POINTS,
        rho=_RHO,
        dump_first=_FLAG,
        strict_bulk=_FLAG,
    ),
    "l2box": _section(
        box=_BOX,
        dt={"type": "number", "exclusiveMinimum": 0, "maximum": 0.01},
        keep_every={"type": "integer", "minimum": 1},
        rho=_RHO,
        bump=_section(center=_POINT, width=_POSITIVE),
        dump_first=_FLAG,
    ),
    "dimension": _section(box_sizes={"type": "array", "items": _POSITIVE, "minItems": 3}, bootstrap_reps=_REPS),
    "ruin": _section(
        l={"type": "array", "items": _POSITIVE, "minItems": 1},
        method={"enum": ["spheres", "grid"]},
        eps=_POSITIVE,
        dt=_POSITIVE,
    ),
    "beurling": _section(x_dist={"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}, bootstrap_reps=_REPS),
}

ROOT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {"experiment": EXPERIMENT_SCHEMA, **SECTION_SCHEMAS},
    "required": ["experiment"],
    "additionalProperties": False,
}


# --- 2. Defaults ---

def _pad(point: list, d: int) -> list:
    return list(point) + [0.0] * (d - len(point))


def _circle_points(radius: float, degrees: list, d: int) -> list:
    """Points at ``radius`` on the first coordinate plane, one per angle in degrees."""
    return [_pad([radius * math.cos(math.radians(a)), radius * math.sin(math.radians(a))], d) for a in degrees]


def default_section(kind: str, d: int) -> dict:
    """Kind-specific parameters used where the file is silent."""
    if kind == "xi":
        return {"indexing": "radius", "well_separated": False, "bootstrap_reps": 1000}
    if kind == "one_point":
        return {"points": [_pad([0.45], d)], "bootstrap_reps": 1000, "strict_bulk": True}
    if kind == "two_point":
        return {
            "z": _pad([0.45], d),
            "w": _circle_points(0.45, [60, 90, 120, 150, 180], d),
            "bootstrap_reps": 1000,
            "strict_bulk": True,
        }
    if kind == "moments":
        return {"bootstrap_reps": 1000}
    if kind == "cutball":
        return {
            "event": "transfer",
            "points": [_pad([0.5], d), _pad([0.0, -0.5], d)],
            "rho": 0.05,
            "bootstrap_reps": 1000,
            "strict_bulk": True,
        }
    if kind == "couple":
        return {
            "dt": 0.01,
            "deviation_exponent": 0.65,
            "points": [_pad([0.5], d)],
            "rho": 0.05,
            "dump_first": False,
            "strict_bulk": True,
        }
    if kind == "l2box":
        return {"box": {"k": [7] + [0] * (d - 1), "n_box": 4}, "dt": 0.01, "rho": 0.05, "dump_first": False}
    if kind == "dimension":
        return {"box_sizes": [0.005, 0.01, 0.02, 0.05, 0.1, 0.2], "bootstrap_reps": 1000}
    if kind == "ruin":
        return {"l": [1, 2, 1], "method": "spheres", "dt": 1e-4}
    if kind == "beurling":
        return {"x_dist": [1, 2, 4, 8, 16, 32], "bootstrap_reps": 1000}
    raise ValueError(f"unknown experiment kind '{kind}'")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    d: int
    scales: tuple
    trials: int
    seed: int
    workers: int
    out: Path
    xi_override: Optional[float] = None
    params: dict = field(default_factory=dict)

    @property
    def xi(self) -> float:
        return default_xi(self.d) if self.xi_override is None else self.xi_override

    def to_record(self) -> dict:
        record = asdict(self)
        record["scales"] = list(self.scales)
        record["out"] = self.out.as_posix()
        return record


# --- 3. Validation ---

def _location(path) -> str:
    """Dotted key path of a schema error."""
    parts = [str(p) for p in path]
    return ".".join(parts) if parts else "<root>"


def _schema_errors(data: Any) -> list[str]:
    """Every jsonschema violation of the file as "location: message"."""
    validator = Draft202012Validator(ROOT_SCHEMA)
    errors = []
    for error in sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message)):
        message = error.message
        if error.validator == "enum" and list(error.absolute_path) == ["experiment", "d"]:
            message = f"{error.instance!r} is not supported; supported dimensions are 2 and 3"
        errors.append(f"{_location(error.absolute_path)}: {message}")
    if isinstance(data, dict) and not isinstance(data.get("experiment"), dict):
        # list the experiment fields too when the whole section is missing
        for error in Draft202012Validator(EXPERIMENT_SCHEMA).iter_errors({}):
            errors.append(f"experiment: {error.message}")
    return errors


def _check_point(location: str, point: list, d: int, errors: list) -> None:
    """Record an error unless the point has d coordinates and lies in the punctured open unit ball."""
    if len(point) != d:
        errors.append(f"{location}: point {point} has {len(point)} coordinates, expected {d}")
        return
    r = math.hypot(*point)
    if r == 0 or r >= 1:
        errors.append(f"{location}: point {point} must lie strictly inside the unit ball and differ from 0")


def _check_ball_fits(location: str, point: list, log_inner: float, errors: list) -> None:
    """Inner ball of radius e^log_inner around the point avoids 0 and stays inside the unit ball."""
    r, inner = math.hypot(*point), math.exp(log_inner)
    if r <= inner or r + inner >= 1:
        errors.append(f"{location}: the cut ball of radius {inner:.3g} around {point} does not fit between 0 and the unit sphere")


def _build_box(location: str, spec: dict, d: int, errors: list) -> Optional[NiceBox]:
    """NiceBox from its section, or None after recording why it is invalid."""
    if len(spec["k"]) != d:
        errors.append(f"{location}.k: expected {d} indices, got {len(spec['k'])}")
        return None
    try:
        return NiceBox(tuple(spec["k"]), spec["n_box"])
    except ValueError as exc:
        errors.append(f"{location}: {exc}")
        return None


def _bulk_errors(kind: str, scales: list, params: dict) -> list[str]:
    """Points and separations closer than e^{-n/6} to 0, the unit sphere or each other at the smallest scale."""
    if kind == "cutball" and params["event"] == "continuous":
        return []
    n = scales[0]
    located = [(f"{kind}.points.{i}", point) for i, point in enumerate(params.get("points", []))]
    if "z" in params:
        located.append((f"{kind}.z", params["z"]))
    located.extend((f"{kind}.w.{i}", point) for i, point in enumerate(params.get("w", [])))
    errors = []
    for location, point in located:
        try:
            check_bulk_point(point, n)
        except ValueError as exc:
            errors.append(f"{location}: {exc} (set {kind}.strict_bulk: false for calibration runs)")
    for i, w in enumerate(params.get("w", [])):
        if math.dist(params["z"], w) < math.exp(-n / 6):
            errors.append(f"{kind}.w.{i}: |z - w| is below e^(-n/6) = {math.exp(-n / 6):.3g} at n={n:g}")
    return errors


def _semantic_errors(kind: str, d: int, scales: list, params: dict) -> list[str]:
    """Checks the schema cannot express, collected in file order."""
    errors = []
    if any(b < a for a, b in zip(scales, scales[1:])):
        errors.append(f"experiment.scales: scales must be sorted ascending, got {scales}")
    if kind in ("moments", "couple", "l2box") and min(scales) < 1:
        errors.append(f"experiment.scales: {kind} scales must be at least 1")
    if kind == "xi":
        if min(scales) < 0:
            errors.append("experiment.scales: log-radii must be non-negative")
        if params["indexing"] == "time" and any(s != int(s) or s < 1 for s in scales):
            errors.append("experiment.scales: time-indexed scales are step counts (positive integers)")

    for key in ("points", "w"):
        for i, point in enumerate(params.get(key, [])):
            _check_point(f"{kind}.{key}.{i}", point, d, errors)
    if "z" in params:
        _check_point(f"{kind}.z", params["z"], d, errors)

    if kind == "two_point" and "box" in params:
        box = _build_box("two_point.box", params["box"], d, errors)
        if box is not None and not all(box.contains(p) for p in [params["z"], *params["w"]] if len(p) == d):
            errors.append("two_point.box: z and every w must lie in the box")
    if kind == "cutball" and not errors:
        for i, point in enumerate(params["points"]):
            for scale in scales:
                log_inner = -scale if params["event"] == "continuous" else -scale / 4
                _check_ball_fits(f"cutball.points.{i}", point, log_inner, errors)
    if kind == "couple" and not errors:
        for i, point in enumerate(params["points"]):
            for scale in scales:
                _check_ball_fits(f"couple.points.{i}", point, -scale / 4, errors)
    if kind == "l2box":
        _build_box("l2box.box", params["box"], d, errors)
        if "bump" in params and len(params["bump"]["center"]) != d:
            errors.append(f"l2box.bump.center: expected {d} coordinates")
    if kind == "dimension":
        try:
            check_box_sizes(params["box_sizes"])
        except ValueError as exc:
            errors.append(f"dimension.box_sizes: {exc}")
    if kind == "ruin" and len(params["l"]) != len(scales):
        errors.append(f"ruin.l: expected one inner log-radius per scale ({len(scales)}), got {len(params['l'])}")
    if kind == "beurling":
        if d != 2:
            errors.append(f"experiment.d: the Beurling escape check is planar, d={d} is not supported")
        limit = math.exp(min(scales))
        if any(x >= limit for x in params["x_dist"]):
            errors.append(f"beurling.x_dist: distances must stay below e^r = {limit:.4g}")
    if kind == "one_point" and "boundary_sweep" in params:
        sweep = params["boundary_sweep"]
        _check_point("one_point.boundary_sweep.direction", sweep["direction"], d, errors)
        if any(dist >= 0.5 for dist in sweep["distances"]):
            errors.append("one_point.boundary_sweep.distances: distances to the unit sphere must stay below 1/2")
    if kind in BULK_KINDS and params["strict_bulk"] and not errors:
        errors.extend(_bulk_errors(kind, scales, params))
    return errors


def validate_config(raw: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    """
    Parse one experiment file, apply defaults and check every invariant.

    Args:
        raw: YAML text.
        overrides: experiment keys (seed, workers, out, d) taking precedence
            over the file, as given on the command line.

    Returns:
        ExperimentConfig.

    Raises:
        ConfigError: listing every violation with its location.
    """
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<root>: invalid YAML: {exc}"]) from exc
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError([f"<root>: expected a mapping, got {type(data).__name__}"])
    if overrides and isinstance(data.get("experiment"), dict):
        data["experiment"].update({k: v for k, v in overrides.items() if v is not None})

    errors = _schema_errors(data)
    if errors:
        raise ConfigError(errors)

    experiment = data["experiment"]
    kind, d = experiment["kind"], experiment.get("d", 2)
    stray = [key for key in SECTION_SCHEMAS if key in data and key != kind]
    if stray:
        raise ConfigError([f"{key}: section does not match experiment kind '{kind}'" for key in stray])
    params = {**default_section(kind, d), **data.get(kind, {})}
    scales = list(experiment["scales"])
    errors = _semantic_errors(kind, d, scales, params)
    if errors:
        raise ConfigError(errors)

    return ExperimentConfig(
        kind=kind,
        d=d,
        scales=tuple(scales),
        trials=experiment.get("trials", DEFAULT_TRIALS[kind]),
        seed=experiment.get("seed", 0),
        workers=experiment.get("workers", default_workers()),
        out=Path(experiment.get("out", OUTPUT_ROOT / kind)),
        xi_override=experiment.get("xi_override"),
        params=params,
    )


def load_config(file_path: Union[str, Path], overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read and validate an experiment file."""
    file_path = Path(file_path)
    if not file_path.is_file():
        raise ConfigError([f"<root>: config file '{file_path}' not found"])
    return validate_config(file_path.read_text(encoding="utf-8"), overrides)


def default_config_text(kind: str) -> str:
    """Minimal file for ``kind``, used when no config file is given."""
    if kind not in KINDS:
        raise ValueError(f"unknown experiment kind '{kind}'")
    data = {"experiment": {"kind": kind, "scales": DEFAULT_SCALES[kind]}}
    if kind in BULK_KINDS and min(DEFAULT_SCALES[kind]) < BULK_SCALE:
        # the shipped small-n scales are calibration runs
        data[kind] = {"strict_bulk": False}
    return yaml.safe_dump(data, sort_keys=False)
