"""
Staged result files. Everything an experiment writes lands in a hidden
staging directory first and is moved into the output directory only once
the whole run has succeeded.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd
from loguru import logger

SCHEMA_PREFIX = "cutlab"
SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.12g"
MANIFEST_NAME = "manifest.json"


def schema_tag(table: str) -> str:
    """First line of a table file."""
    return f"# schema={SCHEMA_PREFIX}/{table}/v{SCHEMA_VERSION}"


def _jsonable(value: Any) -> Any:
    """Plain JSON types for numpy scalars, arrays, paths and tuples."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return value.as_posix()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def dump_json(data: Any) -> str:
    """Sorted, indented JSON; NaN and infinities are refused."""
    return json.dumps(_jsonable(data), indent=2, sort_keys=True, allow_nan=False) + "\n"


def file_digest(file_path: Union[str, Path]) -> str:
    """sha256 hex digest of a file."""
    sha = hashlib.sha256()
    with open(file_path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            sha.update(block)
    return sha.hexdigest()


def read_table(file_path: Union[str, Path]) -> pd.DataFrame:
    """Load a table written by :meth:`OutputStage.write_table`."""
    return pd.read_csv(file_path, comment="#")


class OutputStage:
    """
    Context manager around ``<out>/.staging-<kind>/``.

    On a clean exit the staged files replace their counterparts in ``out``;
    on any exception, KeyboardInterrupt included, the staging directory is
    removed and the output directory is left as it was.
    """

    def __init__(self, out: Union[str, Path], kind: str):
        self.out = Path(out)
        self.kind = kind
        self.staging = self.out / f".staging-{kind}"
        self.names: list[str] = []

    def __enter__(self) -> "OutputStage":
        if self.staging.exists():
            logger.warning(f"Removing stale staging directory '{self.staging}'.")
            shutil.rmtree(self.staging)
        self.staging.mkdir(parents=True)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is not None:
            shutil.rmtree(self.staging, ignore_errors=True)
            logger.error(f"Run aborted; partial outputs in '{self.staging}' removed.")
            return False
        for name in self.names:
            os.replace(self.staging / name, self.out / name)
        shutil.rmtree(self.staging, ignore_errors=True)
        logger.success(f"{len(self.names)} files written to '{self.out}'.")
        return False

    def path(self, name: str) -> Path:
        """Staging path for ``name``; the file is committed with the rest."""
        if name in self.names:
            raise ValueError(f"output '{name}' written twice")
        self.names.append(name)
        return self.staging / name

    def write_table(self, table: str, frame: pd.DataFrame) -> Path:
        """Write ``frame`` as <table>.csv behind its schema tag."""
        target = self.path(f"{table}.csv")
        with open(target, "w", encoding="utf-8", newline="") as handle:
            handle.write(schema_tag(table) + "\n")
            frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.info(f"Table '{table}': {len(frame)} rows.")
        return target

    def write_json(self, name: str, data: Any) -> Path:
        """Write ``data`` as <name>.json."""
        target = self.path(f"{name}.json")
        target.write_text(dump_json(data), encoding="utf-8")
        return target

    def digests(self) -> dict:
        """sha256 of every staged file except the manifest."""
        return {name: file_digest(self.staging / name) for name in sorted(self.names) if name != MANIFEST_NAME}


def verify_digests(out: Union[str, Path]) -> list[str]:
    """Names of outputs whose content no longer matches the manifest."""
    out = Path(out)
    manifest = json.loads((out / MANIFEST_NAME).read_text(encoding="utf-8"))
    return [
        name
        for name, digest in sorted(manifest["digests"].items())
        if not (out / name).is_file() or file_digest(out / name) != digest
    ]
