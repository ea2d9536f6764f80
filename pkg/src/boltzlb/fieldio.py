"""Deterministic on-disk formats: binary field snapshots, CSV, plot data.

The binary format is a fixed 40-byte header (magic, version, shape as
little-endian int64) followed by the raw float64 array in C order.  All
text emission goes through fixed-precision formatting so identical data
produces byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import PhaseField, SpatialGrid, VelocityGrid

MAGIC = b"BLBF"
VERSION = 1
_HEADER = struct.Struct("<4sI4q")  # magic, version, (n_x, n, n, n)


def write_field(path, f: PhaseField) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, *f.values.shape))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path, x_grid: SpatialGrid, v_grid: VelocityGrid) -> PhaseField:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, version, *shape = _HEADER.unpack(head)
        if magic != MAGIC or version != VERSION:
            raise ValueError(f"{path} is not a field snapshot (bad header)")
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(shape)
    return PhaseField(data.copy(), x_grid, v_grid)


def write_csv(path, header, rows) -> None:
    """Rows of floats/strings; floats get fixed scientific formatting."""
    lines = [",".join(header)]
    for row in rows:
        cells = [c if isinstance(c, str) else f"{c:.12e}" for c in row]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_dat(path, columns, comment: str = "") -> None:
    """Whitespace-separated columns for gnuplot consumption."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    lines = []
    if comment:
        lines.append("# " + comment)
    for vals in zip(*cols):
        lines.append(" ".join(f"{v:.12e}" for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, payload: dict) -> None:
    """Sorted-key JSON with a trailing newline; deterministic bytes."""
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n")
