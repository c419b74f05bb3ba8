"""
Path dumps: compact binary "CUTP" files and per-site CSV tables.

Binary layout: magic b"CUTP", version (u16 little endian), d (u8), then
varints: zigzag start coordinates, the number of edges, and one varint per
edge holding (code_k - code_{k-1}) mod 2d with code_{-1} = 0.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from loguru import logger

from src.walk_core.lattice_walk import LatticePath, path_from_directions

MAGIC = b"CUTP"
FORMAT_VERSION = 1
AXIS_NAMES = ("x", "y", "z")


def _zigzag(value: int) -> int:
    """Signed to unsigned, small magnitudes first."""
    return (value << 1) ^ (value >> 63)


def _unzigzag(value: int) -> int:
    """Inverse of _zigzag."""
    return (value >> 1) ^ -(value & 1)


def _write_varint(out: bytearray, value: int) -> None:
    """Append ``value`` as a little-endian base-128 varint."""
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _read_varint(data: bytes, offset: int) -> tuple[int, int]:
    """Varint at ``offset``; returns (value, next offset)."""
    result = shift = 0
    while True:
        if offset >= len(data):
            raise ValueError("truncated varint in path dump")
        byte = data[offset]
        offset += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, offset
        shift += 7


def encode_path(path: LatticePath) -> bytes:
    """Binary dump: header, start site, edge count, then one delta byte per edge."""
    out = bytearray(MAGIC)
    out += struct.pack("<HB", FORMAT_VERSION, path.d)
    for coord in path.start.tolist():
        _write_varint(out, _zigzag(int(coord)))
    _write_varint(out, path.n_steps)
    codes = path.directions()
    deltas = np.mod(np.diff(codes, prepend=0), 2 * path.d)
    # every delta fits in one varint byte since 2d <= 6
    out += deltas.astype(np.uint8).tobytes()
    return bytes(out)


def decode_path(data: bytes) -> LatticePath:
    """Inverse of encode_path; rejects unknown magic or versions."""
    if data[:4] != MAGIC:
        raise ValueError("not a CUTP path dump (bad magic)")
    version, d = struct.unpack_from("<HB", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported CUTP version {version}")
    offset = 7
    start = []
    for _ in range(d):
        raw, offset = _read_varint(data, offset)
        start.append(_unzigzag(raw))
    n_steps, offset = _read_varint(data, offset)
    deltas = np.frombuffer(data, dtype=np.uint8, count=n_steps, offset=offset).astype(np.int64)
    codes = np.mod(np.cumsum(deltas), 2 * d)
    return path_from_directions(start, codes)


def write_path_dump(path: LatticePath, file_path: Union[str, Path]) -> Path:
    """Write the binary dump of ``path``."""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    file_path.write_bytes(encode_path(path))
    logger.info(f"Path of {path.n_steps} steps dumped to '{file_path}'.")
    return file_path


def read_path_dump(file_path: Union[str, Path]) -> LatticePath:
    """Read a binary path dump."""
    return decode_path(Path(file_path).read_bytes())


def path_to_frame(path: LatticePath) -> pd.DataFrame:
    """One row per site: time t (1/d per edge) and coordinates."""
    frame = pd.DataFrame(path.sites, columns=list(AXIS_NAMES[: path.d]))
    frame.insert(0, "t", np.arange(path.sites.shape[0]) / path.d)
    return frame


def write_path_csv(path: LatticePath, file_path: Union[str, Path]) -> Path:
    """Write the path as CSV, one row per site."""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    path_to_frame(path).to_csv(file_path, index=False)
    return file_path
