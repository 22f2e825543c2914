"""Dense tensors, reverse-mode differentiation and seeded randomness."""

import numpy as np

from .conv import conv2d, conv_output_extent, conv_transpose2d, transposed_output_extent
from .gradcheck import finite_diff_check
from .rng import SeededRng, splitmix64
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    default_dtype,
    exp,
    getitem,
    log,
    log_softmax,
    logsumexp,
    matmul,
    maximum,
    mean,
    mul,
    negate,
    precision,
    relu,
    reset,
    reshape,
    scale,
    sigmoid,
    softmax,
    sub,
    tile_batch,
    transpose,
    tsum,
)
from .tensorio import load_tensor, read_tensor, save_tensor, write_tensor

transposed_conv2d = conv_transpose2d

def gaussian_sample(rng: SeededRng, dims) -> Tensor:
    """I.i.d. standard normal tensor; scaling is left to the caller."""
    return Tensor(rng.normal(dims))

def elementwise(kind: str, a: Tensor, b=None) -> Tensor:
    """Dispatch by name: add, sub, mul, relu, exp, log, negate, scale."""
    if kind in ("add", "sub", "mul"):
        return {"add": add, "sub": sub, "mul": mul}[kind](a, b)
    if kind == "scale":
        return scale(a, b)
    unary = {"relu": relu, "exp": exp, "log": log, "negate": negate}
    if kind not in unary:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    return unary[kind](a)

__all__ = [
    "SeededRng",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "conv2d",
    "conv_output_extent",
    "conv_transpose2d",
    "default_dtype",
    "elementwise",
    "exp",
    "finite_diff_check",
    "gaussian_sample",
    "getitem",
    "load_tensor",
    "log",
    "log_softmax",
    "logsumexp",
    "matmul",
    "maximum",
    "mean",
    "mul",
    "negate",
    "precision",
    "read_tensor",
    "relu",
    "reset",
    "reshape",
    "save_tensor",
    "scale",
    "sigmoid",
    "softmax",
    "splitmix64",
    "sub",
    "tile_batch",
    "transpose",
    "transposed_conv2d",
    "transposed_output_extent",
    "tsum",
    "write_tensor",
]
