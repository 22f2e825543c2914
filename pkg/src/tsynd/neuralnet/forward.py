"""Forward evaluation of a :class:`NetworkSpec` and dropout-mask machinery."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..diffcore import SeededRng, Tensor, as_tensor, conv2d, conv_transpose2d, matmul, mul, relu, reshape, sigmoid, transpose
from ..diffcore.tensor import add
from ..errors import ShapeError, SpecError
from .params import ParameterStore
from .spec import Conv, ConvTranspose, Dense, Dropout, Flatten, NetworkSpec, ReLU, Reshape, Sigmoid

MaskCollection = Sequence[np.ndarray]


@dataclass
class DropoutMaskSet:
    """``K`` mask collections, one array per dropout layer in each.

    Entries are 0 or ``1/(1-p)`` (inverted dropout). Arrays are shaped like a
    single activation, or carry a leading batch axis when sampled per sample.
    """

    collections: List[List[np.ndarray]]
    probs: List[float]

    @property
    def K(self) -> int:
        return len(self.collections)

    def __len__(self) -> int:
        return len(self.collections)

    def __getitem__(self, k: int) -> List[np.ndarray]:
        return self.collections[k]

    def stacked(self) -> List[np.ndarray]:
        """Per dropout layer, all ``K`` batched masks concatenated along axis 0."""
        return [np.concatenate([c[j] for c in self.collections], axis=0) for j in range(len(self.probs))]


def sample_masks(
    spec: NetworkSpec,
    K: int,
    rng: SeededRng,
    p_override: Optional[float] = None,
    batch: Optional[int] = None,
    start: int = 0,
) -> DropoutMaskSet:
    """Draw ``K`` independent Bernoulli(1-p) keep-masks scaled by ``1/(1-p)``."""
    if K < 1:
        raise ValueError("K must be at least 1")
    trace = spec.dims_trace()
    layers = [i for i in spec.dropout_indices() if i >= start]
    probs = [spec.layers[i].p if p_override is None else float(p_override) for i in layers]
    for p in probs:
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability {p} outside [0, 1)")
    collections = []
    for _ in range(K):
        masks = []
        for i, p in zip(layers, probs):
            dims = trace[i] if batch is None else (batch,) + tuple(trace[i])
            keep = rng.bernoulli(1.0 - p, dims)
            masks.append((keep * (1.0 / (1.0 - p))).astype(np.float32))
        collections.append(masks)
    return DropoutMaskSet(collections, probs)


def stack_mask_sets(sets: Sequence[DropoutMaskSet]) -> DropoutMaskSet:
    """Merge per-sample mask sets (same K) into one set with a leading batch axis."""
    if not sets:
        raise ValueError("no mask sets to stack")
    K = sets[0].K
    if any(s.K != K for s in sets):
        raise ValueError("mask sets disagree on K")
    collections = [
        [np.stack([s.collections[k][j] for s in sets]) for j in range(len(sets[0].probs))] for k in range(K)
    ]
    return DropoutMaskSet(collections, list(sets[0].probs))


def forward(
    spec: NetworkSpec,
    params: ParameterStore,
    x,
    masks: Optional[MaskCollection] = None,
    start: int = 0,
    stop: Optional[int] = None,
    capture: Optional[Dict[int, Tensor]] = None,
) -> Tensor:
    """Apply layers ``start:stop`` to ``x`` and return the raw output.

    Without ``masks`` dropout layers are the identity (inference mode). With a
    mask collection, each dropout layer multiplies by its mask in order.
    ``capture`` receives every layer output keyed by layer index.
    """
    stop = len(spec.layers) if stop is None else stop
    trace = spec.dims_trace()
    x = as_tensor(x)
    expected = tuple(trace[start])
    if x.dims == expected:
        x, squeeze = reshape(x, (1,) + expected), True
    elif x.dims[1:] == expected:
        squeeze = False
    else:
        raise ShapeError(f"input dims {x.dims} do not match {expected}")
    n = x.dims[0]
    dropout_here = [i for i in spec.dropout_indices() if start <= i < stop]
    if masks is not None and len(masks) != len(dropout_here):
        raise SpecError(f"mask collection has {len(masks)} masks for {len(dropout_here)} dropout layers")
    mask_iter = iter(masks) if masks is not None else None

    h = x
    for i in range(start, stop):
        layer = spec.layers[i]
        if isinstance(layer, Conv):
            h = conv2d(h, params[f"{i}.weight"], params[f"{i}.bias"], layer.stride, layer.padding)
        elif isinstance(layer, ConvTranspose):
            h = conv_transpose2d(h, params[f"{i}.weight"], params[f"{i}.bias"], layer.stride, layer.padding)
        elif isinstance(layer, Dense):
            w = params[f"{i}.weight"]
            h = add(matmul(h, transpose(w)), params[f"{i}.bias"])
        elif isinstance(layer, ReLU):
            h = relu(h)
        elif isinstance(layer, Sigmoid):
            h = sigmoid(h)
        elif isinstance(layer, Dropout):
            if mask_iter is not None:
                mask = next(mask_iter)
                if mask.shape != h.dims[1:] and mask.shape != h.dims:
                    raise ShapeError(f"dropout mask dims {mask.shape} do not fit activation {h.dims}")
                h = mul(h, Tensor(mask))
        elif isinstance(layer, Flatten):
            h = reshape(h, (n, -1))
        elif isinstance(layer, Reshape):
            h = reshape(h, (n,) + tuple(layer.dims))
        if capture is not None:
            capture[i] = h
    return reshape(h, h.dims[1:]) if squeeze else h

