"""2-D convolution (cross-correlation) and its adjoint, via im2col.

Inputs are ``N x C x H x W``; a single ``C x H x W`` image is accepted and
the batch axis is dropped again on output. Kernels are laid out
``C_out x C_in x kH x kW`` for both operations, so ``conv_transpose2d(y, k)``
maps ``C_out`` channels back to ``C_in`` and is the exact adjoint of
``conv2d(x, k)`` with the same stride and padding.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, default_dtype


def conv_output_extent(n: int, k: int, stride: int, padding: int) -> int:
    span = n + 2 * padding - k
    if stride <= 0 or padding < 0:
        raise ShapeError("stride must be positive and padding non-negative")
    if span < 0 or span % stride:
        raise ShapeError(
            f"output extent ({n} + 2*{padding} - {k})/{stride} + 1 is not a positive integer"
        )
    return span // stride + 1


def transposed_output_extent(n: int, k: int, stride: int, padding: int) -> int:
    out = (n - 1) * stride - 2 * padding + k
    if stride <= 0 or padding < 0 or out <= 0:
        raise ShapeError(f"transposed conv gives non-positive extent for n={n}, k={k}")
    return out


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """``N x C x Hp x Wp`` -> contiguous ``(N*ho*wo) x (C*kh*kw)`` patch matrix."""
    n, c = xp.shape[:2]
    v = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    v = v[:, :, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]
    return np.ascontiguousarray(v.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def _fold(cols: np.ndarray, shape: Tuple[int, int, int, int], kh: int, kw: int, stride: int, padding: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of :func:`_windows` followed by cropping the padding."""
    n, c, h, w = shape
    cols = cols.reshape(n, ho, wo, c, kh, kw)
    out = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out[:, :, padding : padding + h, padding : padding + w]


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _batched(x: Tensor) -> Tuple[Tensor, bool]:
    from .tensor import reshape

    if x.ndim == 3:
        return reshape(x, (1,) + x.dims), True
    if x.ndim != 4:
        raise ShapeError(f"conv input must be C x H x W or N x C x H x W, got {x.dims}")
    return x, False


def _unbatch(out: Tensor, squeeze: bool) -> Tensor:
    from .tensor import reshape

    return reshape(out, out.dims[1:]) if squeeze else out


def conv2d(x: Tensor, kernels: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    x, squeeze = _batched(as_tensor(x))
    kernels = as_tensor(kernels)
    if kernels.ndim != 4 or kernels.dims[1] != x.dims[1]:
        raise ShapeError(f"conv2d: kernels {kernels.dims} do not match input channels {x.dims[1]}")
    n, c, h, w = x.dims
    co, _, kh, kw = kernels.dims
    ho = conv_output_extent(h, kh, stride, padding)
    wo = conv_output_extent(w, kw, stride, padding)
    cols = _windows(_pad(x.data, padding), kh, kw, stride, ho, wo)
    wmat = kernels.data.reshape(co, -1)
    out = (cols @ wmat.T).reshape(n, ho, wo, co).transpose(0, 3, 1, 2)
    parents = [x, kernels]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.dims != (co,):
            raise ShapeError(f"conv2d: bias dims {bias.dims} != ({co},)")
        out = out + bias.data.reshape(1, co, 1, 1)
        parents.append(bias)

    def grad_fn(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, co)
        dx = _fold(gmat @ wmat, x.dims, kh, kw, stride, padding, ho, wo) if x.requires_grad else None
        dk = (gmat.T @ cols).reshape(kernels.dims) if kernels.requires_grad else None
        grads = [dx, dk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3), dtype=np.float64).astype(g.dtype))
        return tuple(grads)

    result = Tensor._result(np.ascontiguousarray(out), parents, grad_fn, "conv2d")
    return _unbatch(result, squeeze)


def conv_transpose2d(y: Tensor, kernels: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    y, squeeze = _batched(as_tensor(y))
    kernels = as_tensor(kernels)
    if kernels.ndim != 4 or kernels.dims[0] != y.dims[1]:
        raise ShapeError(f"conv_transpose2d: kernels {kernels.dims} do not match input channels {y.dims[1]}")
    n, co, ho, wo = y.dims
    _, c, kh, kw = kernels.dims
    h = transposed_output_extent(ho, kh, stride, padding)
    w = transposed_output_extent(wo, kw, stride, padding)
    wmat = kernels.data.reshape(co, -1)
    ymat = y.data.transpose(0, 2, 3, 1).reshape(n * ho * wo, co)
    out = _fold(ymat @ wmat, (n, c, h, w), kh, kw, stride, padding, ho, wo)
    parents = [y, kernels]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.dims != (c,):
            raise ShapeError(f"conv_transpose2d: bias dims {bias.dims} != ({c},)")
        out = out + bias.data.reshape(1, c, 1, 1)
        parents.append(bias)

    def grad_fn(g):
        gcols = _windows(_pad(g, padding), kh, kw, stride, ho, wo)
        dy = (gcols @ wmat.T).reshape(n, ho, wo, co).transpose(0, 3, 1, 2) if y.requires_grad else None
        dk = (ymat.T @ gcols).reshape(kernels.dims) if kernels.requires_grad else None
        grads = [dy, dk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3), dtype=np.float64).astype(g.dtype))
        return tuple(grads)

    result = Tensor._result(np.ascontiguousarray(out, dtype=default_dtype()), parents, grad_fn, "conv_transpose2d")
    return _unbatch(result, squeeze)
