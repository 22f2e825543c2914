"""TSYD binary tensor container.

Layout: ``b"TSYD"``, version ``0x01``, dtype ``0x01`` (float32), ndim byte,
``ndim`` little-endian u32 extents, then the row-major little-endian float32
payload.
"""

from __future__ import annotations

import io
import os
import struct
from typing import BinaryIO, Union

import numpy as np

from ..errors import BadMagicError, CorruptFileError, UnsupportedVersionError
from .tensor import Tensor

MAGIC = b"TSYD"
VERSION = 0x01
DTYPE_F32 = 0x01


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    buf = stream.read(n)
    if len(buf) != n:
        raise CorruptFileError(f"truncated tensor record while reading {what}")
    return buf


def encode_tensor(t) -> bytes:
    arr = np.ascontiguousarray(t.data if isinstance(t, Tensor) else t, dtype="<f4")
    if arr.ndim > 255:
        raise ValueError("too many dimensions for a TSYD record")
    head = MAGIC + bytes([VERSION, DTYPE_F32, arr.ndim])
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes(order="C")


def write_tensor(stream: BinaryIO, t) -> None:
    stream.write(encode_tensor(t))


def read_array(stream: BinaryIO) -> np.ndarray:
    magic = _read_exact(stream, 4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"expected tensor magic {MAGIC!r}, found {magic!r}")
    version, dtype, ndim = _read_exact(stream, 3, "header")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported tensor version {version:#04x}")
    if dtype != DTYPE_F32:
        raise UnsupportedVersionError(f"unsupported tensor dtype {dtype:#04x}")
    dims = struct.unpack(f"<{ndim}I", _read_exact(stream, 4 * ndim, "extents"))
    count = int(np.prod(dims)) if dims else 1
    payload = _read_exact(stream, 4 * count, "payload")
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
    if not np.isfinite(arr).all():
        raise CorruptFileError("tensor payload contains NaN or Inf")
    return arr


def read_tensor(stream: BinaryIO) -> Tensor:
    return Tensor(read_array(stream))


def save_tensor(path: Union[str, os.PathLike], t) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, t)


def load_tensor(path: Union[str, os.PathLike]) -> Tensor:
    with open(path, "rb") as fh:
        t = read_tensor(fh)
        if fh.read(1):
            raise CorruptFileError(f"{path}: trailing bytes after tensor record")
    return t


def decode_tensor(blob: bytes) -> Tensor:
    return read_tensor(io.BytesIO(blob))
