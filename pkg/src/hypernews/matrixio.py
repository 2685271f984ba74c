"""Binary matrix files: magic ``HGFD``, u32 rows, u32 cols, row-major f32 LE.

Used for news feature matrices, tree node features, and exported embeddings.
The format is deliberately minimal so files are bit-exact across platforms.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError

MAGIC = b"HGFD"
_HEADER = struct.Struct("<4sII")


def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    """Write a 2-D array as a matrix file (values stored as float32 LE)."""
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise DataFormatError(f"matrix must be 2-D, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, m.shape[0], m.shape[1]))
        fh.write(m.tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a matrix file, returning a float32 array of shape (rows, cols)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 4 * rows * cols
    if len(data) != expected:
        raise DataFormatError(
            f"{path}: payload size mismatch, expected {expected} bytes, got {len(data)}"
        )
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return values.reshape(rows, cols).copy()
