"""DSTN: a minimal self-describing binary tensor snapshot format.

Layout, all little-endian:

    bytes 0..3   magic "DSTN"
    byte  4      format version (currently 1)
    byte  5      rank (0 for a scalar)
    next 8*rank  extents as unsigned 64-bit integers
    rest         values as 64-bit floats, row-major

File size is therefore 6 + 8*rank + 8*numel bytes. Round trips are exact:
the payload is the in-memory float64 buffer.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import FormatError
from .tensor import Tensor

MAGIC = b"DSTN"
VERSION = 1


def tensor_to_bytes(t) -> bytes:
    data = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
    # order="C" compacts without promoting rank-0 scalars to rank 1.
    data = np.asarray(data, dtype=np.float64, order="C")
    if data.ndim > 255:
        raise FormatError(f"rank {data.ndim} does not fit in one byte", 5)
    header = MAGIC + bytes([VERSION, data.ndim])
    extents = b"".join(struct.pack("<Q", s) for s in data.shape)
    return header + extents + data.tobytes()


def tensor_from_bytes(data: bytes, path: str = "<bytes>") -> np.ndarray:
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic, expected DSTN", 0)
    if len(data) < 6:
        raise FormatError(f"{path}: truncated header", len(data))
    if data[4] != VERSION:
        raise FormatError(f"{path}: unsupported version {data[4]}", 4)
    rank = data[5]
    offset = 6
    if len(data) < offset + 8 * rank:
        raise FormatError(f"{path}: truncated extents", len(data))
    shape = tuple(
        struct.unpack_from("<Q", data, offset + 8 * i)[0] for i in range(rank)
    )
    offset += 8 * rank
    numel = 1
    for s in shape:
        numel *= s
    need = 8 * numel
    if len(data) - offset < need:
        raise FormatError(
            f"{path}: truncated payload, need {need} bytes, have {len(data) - offset}",
            len(data),
        )
    if len(data) - offset > need:
        raise FormatError(f"{path}: {len(data) - offset - need} trailing bytes", offset + need)
    values = np.frombuffer(data, dtype="<f8", count=numel, offset=offset)
    return values.reshape(shape).copy()


def save_tensor(path: str, t) -> None:
    payload = tensor_to_bytes(t)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-dstn-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as handle:
        return tensor_from_bytes(handle.read(), path)
