"""Compact binary format for two-dimensional grids on uniform axes.

Layout (little endian)::

    offset  size  field
    0       4     magic b"CJGR"
    4       2     format version (u16), currently 1
    6       1     dtype code (u8): 0 = float64, 1 = complex128
    7       1     reserved, zero
    8       4     rows (u32), points along the first axis
    12      4     cols (u32), points along the second axis
    16      32    first-axis min, max, second-axis min, max (4 x float64)
    48      ...   values, row-major
"""
import struct

import numpy as np

__all__ = ["write_grid", "read_grid"]

MAGIC = b"CJGR"
VERSION = 1
_HEADER = struct.Struct("<4sHBBII4d")
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


def write_grid(path, values, row_bounds, col_bounds):
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("grid values must be two-dimensional")
    code = 1 if np.iscomplexobj(values) else 0
    header = _HEADER.pack(MAGIC, VERSION, code, 0, values.shape[0], values.shape[1],
                          float(row_bounds[0]), float(row_bounds[1]),
                          float(col_bounds[0]), float(col_bounds[1]))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values, dtype=_DTYPES[code]).tobytes())


def read_grid(path):
    """Return ``(values, row_bounds, col_bounds)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, code, _, rows, cols, r0, r1, c0, c1 = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a grid file (magic {magic!r})")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if code not in _DTYPES:
        raise ValueError(f"{path}: unknown dtype code {code}")
    dt = _DTYPES[code]
    if len(raw) != _HEADER.size + rows * cols * dt.itemsize:
        raise ValueError(f"{path}: payload size does not match {rows}x{cols}")
    values = np.frombuffer(raw, dtype=dt, offset=_HEADER.size).reshape(rows, cols).copy()
    return values, (r0, r1), (c0, c1)
