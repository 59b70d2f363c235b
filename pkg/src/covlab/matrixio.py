"""Binary square-matrix files: 16-byte header plus row-major float64 payload.

Layout: magic `COVM`, u32 little-endian side length, u32 reserved (zero),
4 zero pad bytes to a 16-byte header, then n*n little-endian float64 values
in row-major order.  Round trips are bit exact, and the fixed layout keeps
the files readable from any language without a schema.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import UsageError

__all__ = ["dump_matrix", "load_matrix"]

_MAGIC = b"COVM"
_HEADER = struct.Struct("<4sII4s")


def dump_matrix(matrix: np.ndarray, path) -> None:
    """Write a square float64 matrix; header carries the side length."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise UsageError(f"matrix must be square, got shape {m.shape}")
    n = m.shape[0]
    if n == 0:
        raise UsageError("refusing to write an empty matrix")
    payload = np.ascontiguousarray(m, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, n, 0, b"\x00" * 4))
        fh.write(payload.tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    """Read a matrix written by dump_matrix; bit exact."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise UsageError(f"{path}: truncated header")
        magic, n, reserved, _pad = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise UsageError(f"{path}: bad magic {magic!r}")
        if reserved != 0:
            raise UsageError(f"{path}: unsupported format revision {reserved}")
        body = fh.read()
    expected = 8 * n * n
    if len(body) != expected:
        raise UsageError(
            f"{path}: payload is {len(body)} bytes, expected {expected} for n={n}"
        )
    return np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(n, n)
