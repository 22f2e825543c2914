"""IDX (MNIST-style) image and label files.

Header: two zero bytes, a dtype code (0x08 = u8), the number of dimensions,
then one big-endian u32 per dimension. Images are stored as u8 and scaled to
[0, 1] on load.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..errors import BadMagicError, CorruptFileError, DataError
from ..harness.data import Dataset

LABEL_MAGIC = 0x00000801
IMAGE_MAGIC = 0x00000803
U8 = 0x08

PathLike = Union[str, os.PathLike]


@dataclass
class IdxFile:
    magic: int
    dims: Tuple[int, ...]
    payload: bytes

    def array(self) -> np.ndarray:
        return np.frombuffer(self.payload, dtype=np.uint8).reshape(self.dims)


def parse_idx(raw: bytes, expected_magic: Optional[int] = None) -> IdxFile:
    if len(raw) < 4:
        raise CorruptFileError("IDX file shorter than its magic number")
    zero, code, ndim = struct.unpack(">HBB", raw[:4])
    magic = struct.unpack(">I", raw[:4])[0]
    if zero != 0 or code != U8 or ndim == 0:
        raise BadMagicError(f"unsupported IDX magic 0x{magic:08x}")
    if expected_magic is not None and magic != expected_magic:
        raise BadMagicError(f"expected IDX magic 0x{expected_magic:08x}, got 0x{magic:08x}")
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise CorruptFileError("IDX header truncated")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    size = int(np.prod(dims, dtype=np.int64))
    payload = raw[head:]
    if len(payload) < size:
        raise CorruptFileError(f"IDX payload truncated: {len(payload)} of {size} bytes")
    if len(payload) > size:
        raise CorruptFileError(f"IDX payload has {len(payload) - size} trailing bytes")
    return IdxFile(magic, tuple(dims), payload)


def read_idx(path: PathLike, expected_magic: Optional[int] = None) -> IdxFile:
    with open(path, "rb") as fh:
        return parse_idx(fh.read(), expected_magic)


def encode_idx(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise DataError("IDX payloads must be u8")
    header = struct.pack(">HBB", 0, U8, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array).tobytes()


def quantize(images: np.ndarray) -> np.ndarray:
    """[0, 1] floats to u8 with round-half-even."""
    return np.clip(np.rint(np.asarray(images, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_idx(path: PathLike, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_idx(array))


def save_idx(d: Dataset, images_path: PathLike, labels_path: PathLike) -> None:
    """Write a single-channel dataset as ``N x H x W`` images plus ``N`` labels."""
    if d.images.shape[1] != 1:
        raise DataError("IDX export supports single-channel images only")
    if d.num_classes > 256:
        raise DataError("IDX labels are u8")
    write_idx(images_path, quantize(d.images[:, 0]))
    write_idx(labels_path, d.labels.astype(np.uint8))


def load_idx(images_path: PathLike, labels_path: PathLike, split: str = "train", num_classes: Optional[int] = None) -> Dataset:
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if len(images.dims) != 3:
        raise DataError(f"image file must be N x H x W, got dims {images.dims}")
    if len(labels.dims) != 1:
        raise DataError(f"label file must be one-dimensional, got dims {labels.dims}")
    if images.dims[0] != labels.dims[0]:
        raise DataError(f"{images.dims[0]} images but {labels.dims[0]} labels")
    x = images.array().astype(np.float32)[:, None] / np.float32(255.0)
    y = labels.array().astype(np.int64)
    classes = int(y.max()) + 1 if num_classes is None else num_classes
    return Dataset(x, y, classes, split)
