"""Layered network descriptions and their shape inference."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Sequence, Tuple, Union

from ..diffcore import conv_output_extent, transposed_output_extent
from ..errors import ShapeError, SpecError

Dims = Tuple[int, ...]


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    kind: str = field(default="conv", init=False)


@dataclass(frozen=True)
class ConvTranspose:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    kind: str = field(default="transposed-conv", init=False)


@dataclass(frozen=True)
class Dense:
    out_features: int
    kind: str = field(default="dense", init=False)


@dataclass(frozen=True)
class ReLU:
    kind: str = field(default="relu", init=False)


@dataclass(frozen=True)
class Sigmoid:
    kind: str = field(default="sigmoid", init=False)


@dataclass(frozen=True)
class Dropout:
    p: float = 0.5
    kind: str = field(default="dropout", init=False)


@dataclass(frozen=True)
class Flatten:
    kind: str = field(default="flatten", init=False)


@dataclass(frozen=True)
class Reshape:
    dims: Tuple[int, ...]
    kind: str = field(default="reshape", init=False)


Layer = Union[Conv, ConvTranspose, Dense, ReLU, Sigmoid, Dropout, Flatten, Reshape]
_KINDS = {cls.__dataclass_fields__["kind"].default: cls for cls in (Conv, ConvTranspose, Dense, ReLU, Sigmoid, Dropout, Flatten, Reshape)}
PARAMETRIC = ("conv", "transposed-conv", "dense")


def layer_from_dict(d: dict) -> Layer:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise SpecError(f"unknown layer kind {kind!r}")
    cls = _KINDS[kind]
    allowed = {f.name for f in fields(cls) if f.init}
    if set(d) - allowed:
        raise SpecError(f"unexpected keys for {kind}: {sorted(set(d) - allowed)}")
    if "dims" in d:
        d["dims"] = tuple(d["dims"])
    try:
        return cls(**d)
    except TypeError as exc:
        raise SpecError(f"bad {kind} layer: {exc}") from None


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layers applied to inputs of ``input_dims`` (batch axis excluded)."""

    input_dims: Tuple[int, ...]
    layers: Tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        object.__setattr__(self, "layers", tuple(self.layers))

    def to_dict(self) -> dict:
        out = []
        for layer in self.layers:
            d = asdict(layer)
            if "dims" in d:
                d["dims"] = list(d["dims"])
            out.append(d)
        return {"input_dims": list(self.input_dims), "layers": out}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        try:
            spec = cls(tuple(d["input_dims"]), tuple(layer_from_dict(layer) for layer in d["layers"]))
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed network spec: {exc}") from None
        spec.validate()
        return spec

    def dims_trace(self) -> List[Dims]:
        """Input dims of every layer, followed by the output dims."""
        dims = self.input_dims
        trace = [dims]
        for i, layer in enumerate(self.layers):
            try:
                dims = _next_dims(layer, dims)
            except ShapeError as exc:
                raise SpecError(f"layer {i} ({layer.kind}): {exc}") from None
            trace.append(dims)
        return trace

    def validate(self) -> "NetworkSpec":
        if not self.input_dims or any(d <= 0 for d in self.input_dims):
            raise SpecError(f"input dims must be positive, got {self.input_dims}")
        for layer in self.layers:
            if isinstance(layer, Dropout) and not 0.0 <= layer.p < 1.0:
                raise SpecError(f"dropout probability {layer.p} outside [0, 1)")
        self.dims_trace()
        return self

    @property
    def output_dims(self) -> Dims:
        return self.dims_trace()[-1]

    def dropout_indices(self) -> List[int]:
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, Dropout)]

    def param_shapes(self) -> Dict[str, Dims]:
        shapes: Dict[str, Dims] = {}
        trace = self.dims_trace()
        for i, layer in enumerate(self.layers):
            d_in = trace[i]
            if isinstance(layer, Conv):
                shapes[f"{i}.weight"] = (layer.out_channels, d_in[0], layer.kernel, layer.kernel)
                shapes[f"{i}.bias"] = (layer.out_channels,)
            elif isinstance(layer, ConvTranspose):
                shapes[f"{i}.weight"] = (d_in[0], layer.out_channels, layer.kernel, layer.kernel)
                shapes[f"{i}.bias"] = (layer.out_channels,)
            elif isinstance(layer, Dense):
                shapes[f"{i}.weight"] = (layer.out_features, d_in[0])
                shapes[f"{i}.bias"] = (layer.out_features,)
        return shapes


def fan_in(layer: Layer, d_in: Dims) -> int:
    if isinstance(layer, (Conv, ConvTranspose)):
        return d_in[0] * layer.kernel * layer.kernel
    if isinstance(layer, Dense):
        return d_in[0]
    raise SpecError(f"{layer.kind} has no weights")


def _next_dims(layer: Layer, dims: Dims) -> Dims:
    if isinstance(layer, Conv):
        if len(dims) != 3:
            raise ShapeError(f"conv expects C x H x W, got {dims}")
        _, h, w = dims
        return (
            layer.out_channels,
            conv_output_extent(h, layer.kernel, layer.stride, layer.padding),
            conv_output_extent(w, layer.kernel, layer.stride, layer.padding),
        )
    if isinstance(layer, ConvTranspose):
        if len(dims) != 3:
            raise ShapeError(f"transposed conv expects C x H x W, got {dims}")
        _, h, w = dims
        return (
            layer.out_channels,
            transposed_output_extent(h, layer.kernel, layer.stride, layer.padding),
            transposed_output_extent(w, layer.kernel, layer.stride, layer.padding),
        )
    if isinstance(layer, Dense):
        if len(dims) != 1:
            raise ShapeError(f"dense expects a flat input, got {dims}")
        return (layer.out_features,)
    if isinstance(layer, Flatten):
        return (math.prod(dims),)
    if isinstance(layer, Reshape):
        if math.prod(layer.dims) != math.prod(dims):
            raise ShapeError(f"cannot reshape {dims} to {layer.dims}")
        return tuple(layer.dims)
    return dims


def sequential(input_dims: Sequence[int], *layers: Layer) -> NetworkSpec:
    return NetworkSpec(tuple(input_dims), layers).validate()
