"""Raw float32 tensor files.

Layout (all little-endian): magic ``F32T``, version u16 (=1), ndim u16,
then ndim u32 dims, then the row-major float32 payload.  A rank-0 scalar
is therefore 12 bytes total.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"F32T"
VERSION = 1
_MAX_NDIM = 32


def write_tensor(path, array) -> None:
    arr = np.asarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<HH", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise FormatError(f"file too short for header ({len(data)} bytes)", offset=len(data))
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0)
    version, ndim = struct.unpack_from("<HH", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if ndim > _MAX_NDIM:
        raise FormatError(f"implausible ndim {ndim}", offset=6)
    dims_end = 8 + 4 * ndim
    if len(data) < dims_end:
        raise FormatError("truncated dims block", offset=len(data))
    dims = struct.unpack_from(f"<{ndim}I", data, 8)
    expected = 4 * int(np.prod(dims, dtype=np.int64)) if ndim else 4
    actual = len(data) - dims_end
    if actual != expected:
        raise FormatError(
            f"payload length mismatch: expected {expected} bytes, got {actual}",
            offset=dims_end,
        )
    flat = np.frombuffer(data, dtype="<f4", offset=dims_end)
    return flat.reshape(dims) if ndim else flat.reshape(())
