"""LTV1 container: little-endian binary tensors with a channel count.

Layout: magic "LTV1" | dtype u8 (0=f32, 1=f64) | rank u8 | reserved u16 |
extents rank*u32 | channels u32 | payload (row-major, channel-last,
little-endian). Arrays round-trip bit-exactly in either dtype.
"""

from __future__ import annotations

import struct

import numpy as np

from .tensor import TensorError

MAGIC = b"LTV1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {"f32": 0, "f64": 1}


def write_ltv(path, array, dtype="f64"):
    """Write a channels-last array; the final axis is stored as the channel count."""
    if dtype not in _CODES:
        raise TensorError(f"dtype must be 'f32' or 'f64', got {dtype!r}")
    array = np.asarray(array)
    if array.ndim < 2:
        raise TensorError("LTV1 stores arrays of rank >= 1 plus a channel axis")
    extents = array.shape[:-1]
    channels = array.shape[-1]
    code = _CODES[dtype]
    payload = np.ascontiguousarray(array, dtype=_DTYPES[code])
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BBH", code, len(extents), 0))
        fh.write(struct.pack(f"<{len(extents)}I", *extents))
        fh.write(struct.pack("<I", channels))
        fh.write(payload.tobytes())


def read_ltv(path):
    """Read an LTV1 file; returns the array in its stored dtype, channels last."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise TensorError(f"{path}: not an LTV1 file (magic {magic!r})")
        code, rank, _ = struct.unpack("<BBH", fh.read(4))
        if code not in _DTYPES:
            raise TensorError(f"{path}: unknown dtype code {code}")
        extents = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        (channels,) = struct.unpack("<I", fh.read(4))
        dtype = _DTYPES[code]
        count = int(np.prod(extents)) * channels
        payload = fh.read(count * dtype.itemsize)
        if len(payload) != count * dtype.itemsize:
            raise TensorError(f"{path}: truncated payload")
        arr = np.frombuffer(payload, dtype=dtype).reshape(*extents, channels)
    return arr.copy()
