"""TSCK checkpoint files.

Layout: ``b"TSCK"``, version ``0x01``, u32 little-endian header length, UTF-8
JSON header ``{spec, names, optimizer, meta}``, then one TSYD tensor record
per parameter in header order. ``spec`` is either one network description or
a mapping of part name to description (e.g. encoder and decoder).
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple, Union

from ..diffcore.tensorio import read_array, write_tensor
from ..errors import BadMagicError, CorruptFileError, FormatError, SpecError, UnsupportedVersionError
from .params import ParameterStore
from .spec import NetworkSpec

MAGIC = b"TSCK"
VERSION = 0x01

SpecLike = Union[NetworkSpec, Mapping[str, NetworkSpec]]


@dataclass
class Checkpoint:
    spec: SpecLike
    params: ParameterStore
    optimizer: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _spec_to_json(spec: SpecLike):
    if isinstance(spec, NetworkSpec):
        return spec.to_dict()
    return {"parts": {name: s.to_dict() for name, s in spec.items()}}


def _spec_from_json(d) -> SpecLike:
    if "parts" in d:
        return {name: NetworkSpec.from_dict(s) for name, s in d["parts"].items()}
    return NetworkSpec.from_dict(d)


def _expected_shapes(spec: SpecLike) -> Dict[str, Tuple[int, ...]]:
    if isinstance(spec, NetworkSpec):
        return spec.param_shapes()
    shapes = {}
    for name, s in spec.items():
        shapes.update({f"{name}.{k}": v for k, v in s.param_shapes().items()})
    return shapes


def _check_consistent(spec: SpecLike, params: ParameterStore) -> None:
    expected = _expected_shapes(spec)
    if sorted(expected) != sorted(params.names()):
        raise SpecError(f"parameter names {params.names()} do not match spec {list(expected)}")
    for name, dims in expected.items():
        if tuple(params[name].dims) != tuple(dims):
            raise SpecError(f"parameter {name} has dims {params[name].dims}, spec wants {dims}")


def encode_checkpoint(params: ParameterStore, spec: SpecLike, optimizer: Optional[dict] = None, meta: Optional[dict] = None) -> bytes:
    _check_consistent(spec, params)
    header = {
        "spec": _spec_to_json(spec),
        "names": params.names(),
        "optimizer": optimizer or {},
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC + bytes([VERSION]) + struct.pack("<I", len(blob)) + blob)
    for name in params.names():
        write_tensor(buf, params[name])
    return buf.getvalue()


def save_checkpoint(params: ParameterStore, spec: SpecLike, path: Union[str, os.PathLike], optimizer: Optional[dict] = None, meta: Optional[dict] = None) -> None:
    blob = encode_checkpoint(params, spec, optimizer, meta)
    with open(path, "wb") as fh:
        fh.write(blob)


def read_checkpoint(path: Union[str, os.PathLike]) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    stream = io.BytesIO(raw)
    magic = stream.read(4)
    if len(magic) < 4:
        raise CorruptFileError(f"{path}: truncated checkpoint header")
    if magic != MAGIC:
        raise BadMagicError(f"{path}: expected checkpoint magic {MAGIC!r}, found {magic!r}")
    version = stream.read(1)
    if not version:
        raise CorruptFileError(f"{path}: truncated checkpoint header")
    if version[0] != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported checkpoint version {version[0]:#04x}")
    size = stream.read(4)
    if len(size) < 4:
        raise CorruptFileError(f"{path}: truncated checkpoint header")
    (n,) = struct.unpack("<I", size)
    blob = stream.read(n)
    if len(blob) != n:
        raise CorruptFileError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(blob.decode("utf-8"))
        spec = _spec_from_json(header["spec"])
        names = list(header["names"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptFileError(f"{path}: unreadable checkpoint header ({exc})") from None
    params = ParameterStore()
    for name in names:
        try:
            params.add(name, read_array(stream))
        except FormatError as exc:
            raise CorruptFileError(f"{path}: parameter {name}: {exc}") from None
    if stream.read(1):
        raise CorruptFileError(f"{path}: trailing bytes after last parameter")
    _check_consistent(spec, params)
    return Checkpoint(spec, params, header.get("optimizer", {}), header.get("meta", {}))


def load_checkpoint(path: Union[str, os.PathLike]) -> Tuple[SpecLike, ParameterStore]:
    ckpt = read_checkpoint(path)
    return ckpt.spec, ckpt.params
