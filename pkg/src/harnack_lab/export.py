"""Snapshot and cost-field export.

Two formats: CSV with one row per node (coordinates then value) and a raw
block of little-endian float64 preceded by a 64-byte header::

    offset  type      content
    0       4s        magic b"HLAB"
    4       <u2       format version
    6       <u2       dimension d
    8       3 x <u4   node counts (unused axes 1)
    20      <f8       snapshot time
    28      3 x <f8   extents (unused axes 0)
    52      <u1       topology (0 box, 1 periodic)
    53      11 bytes  zero padding
"""
from __future__ import annotations

import csv
import struct

import numpy as np

from .errors import GridError
from .fields import GridSpec, ScalarField

MAGIC = b"HLAB"
VERSION = 1
_HEADER = struct.Struct("<4sHH3Id3dB11x")
assert _HEADER.size == 64


def write_csv(f: ScalarField, path, value_name="value", precision=17):
    grid = f.grid
    names = [f"x{i}" for i in range(grid.dim)] + [value_name]
    pts = grid.points()
    vals = f.values.ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for p, v in zip(pts, vals):
            w.writerow([f"{c:.{precision}g}" for c in p] + [f"{v:.{precision}g}"])


def read_csv_values(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, -1]


def write_raw(f: ScalarField, path, time: float = 0.0):
    grid = f.grid
    counts = list(grid.counts) + [1] * (3 - grid.dim)
    extents = list(grid.extent) + [0.0] * (3 - grid.dim)
    header = _HEADER.pack(MAGIC, VERSION, grid.dim, *counts, float(time), *extents, int(grid.periodic))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_raw(path):
    """Return ``(ScalarField, time)`` from a raw block."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise GridError("file too short for an HLAB header")
    magic, version, d, c0, c1, c2, time, e0, e1, e2, topo = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise GridError("bad magic, not an HLAB block")
    if version != VERSION:
        raise GridError(f"unsupported HLAB version {version}")
    counts = (c0, c1, c2)[:d]
    grid = GridSpec(d, (e0, e1, e2)[:d], counts, "periodic" if topo else "box")
    values = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if values.size != grid.size:
        raise GridError(f"payload has {values.size} values, header promises {grid.size}")
    return ScalarField(grid, values.reshape(grid.shape).astype(float)), time
