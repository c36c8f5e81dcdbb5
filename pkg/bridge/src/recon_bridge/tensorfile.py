"""Raw float32 tensor files, implemented independently of any consumer.

Wire layout (little-endian): magic ``F32T``, u16 version (=1), u16 ndim,
ndim u32 dims, row-major float32 payload.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"F32T"
VERSION = 1


class TensorFormatError(ValueError):
    pass


def write_tensor(path, array) -> None:
    arr = np.asarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<HH", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise TensorFormatError(f"not a tensor file: {path}")
    version, ndim = struct.unpack_from("<HH", data, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported tensor version {version} in {path}")
    dims_end = 8 + 4 * ndim
    if len(data) < dims_end:
        raise TensorFormatError(f"truncated dims block in {path}")
    dims = struct.unpack_from(f"<{ndim}I", data, 8)
    expected = 4 * int(np.prod(dims, dtype=np.int64)) if ndim else 4
    if len(data) - dims_end != expected:
        raise TensorFormatError(
            f"payload length mismatch in {path}: expected {expected}, got {len(data) - dims_end}"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=dims_end)
    return flat.reshape(dims) if ndim else flat.reshape(())
