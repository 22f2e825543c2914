"""Immutable dense tensors with define-by-run reverse-mode differentiation.

Each operation returns a new :class:`Tensor`. When any operand requires a
gradient, the result remembers its parents and a closure mapping the output
gradient to parent gradients. Node ids are drawn from a global counter, so
sorting by id is a topological order of every graph ("append-only").

Values are float32 by default; reductions accumulate in float64. The
:func:`precision` context switches the working dtype, which gradient checks
use to keep central differences out of float32 round-off.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DomainError, GraphError, NonFiniteError, ShapeError

_dtype = np.dtype(np.float32)
_ids = itertools.count()

Scalar = Union[int, float]
GradFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    global _dtype
    previous = _dtype
    _dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _dtype = previous


def default_dtype() -> np.dtype:
    return _dtype


class Tensor:
    """A node of the differentiation graph holding an immutable ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_grad_fn", "_id", "_consumed")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, *, allow_nonfinite: bool = False):
        arr = np.array(data, dtype=_dtype, copy=True)
        if not allow_nonfinite and not np.isfinite(arr).all():
            raise NonFiniteError("tensor data contains NaN or Inf")
        arr.flags.writeable = False
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents: Tuple[Tensor, ...] = ()
        self._grad_fn: Optional[GradFn] = None
        self._id = next(_ids)
        self._consumed = False

    @classmethod
    def wrap(cls, arr: np.ndarray) -> "Tensor":
        """Constant leaf sharing ``arr`` without copying (``arr`` must already be finite)."""
        out = cls.__new__(cls)
        out.data = arr
        out.grad = None
        out.requires_grad = False
        out.op = "leaf"
        out._parents = ()
        out._grad_fn = None
        out._id = next(_ids)
        out._consumed = False
        return out

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], grad_fn: GradFn, op: str) -> "Tensor":
        out = cls.__new__(cls)
        arr = np.asarray(data, dtype=_dtype)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"{op} produced NaN or Inf")
        arr.flags.writeable = False
        out.data = arr
        out.grad = None
        out.op = op
        out._id = next(_ids)
        out._consumed = False
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._grad_fn = grad_fn
        else:
            out._parents = ()
            out._grad_fn = None
        return out

    # -- metadata ----------------------------------------------------------

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.data.shape

    shape = dims

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(dims={self.dims}, op={self.op}{flag})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(negate(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def relu(self):
        return relu(self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *dims):
        if len(dims) == 1 and isinstance(dims[0], (tuple, list)):
            dims = tuple(dims[0])
        return reshape(self, dims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_constant(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_dims(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.dims, b.dims)
    except ValueError:
        raise ShapeError(f"{op}: dims {a.dims} and {b.dims} are incompatible") from None


# -- elementwise ---------------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    if _is_constant(b):
        return Tensor._result(a.data + b, (a,), lambda g: (g,), "add")
    b = as_tensor(b)
    _broadcast_dims(a, b, "add")
    return Tensor._result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.dims), _unbroadcast(g, b.dims)),
        "add",
    )


def sub(a: Tensor, b) -> Tensor:
    if _is_constant(b):
        return add(a, -b)
    b = as_tensor(b)
    _broadcast_dims(a, b, "sub")
    return Tensor._result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.dims), _unbroadcast(-g, b.dims)),
        "sub",
    )


def mul(a: Tensor, b) -> Tensor:
    if _is_constant(b):
        return scale(a, b)
    b = as_tensor(b)
    _broadcast_dims(a, b, "mul")
    return Tensor._result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.dims), _unbroadcast(g * a.data, b.dims)),
        "mul",
    )


def scale(a: Tensor, c: Scalar) -> Tensor:
    c = float(c)
    return Tensor._result(a.data * c, (a,), lambda g: (g * c,), "scale")


def negate(a: Tensor) -> Tensor:
    return Tensor._result(-a.data, (a,), lambda g: (-g,), "negate")


def relu(a: Tensor) -> Tensor:
    on = a.data > 0
    return Tensor._result(np.where(on, a.data, 0), (a,), lambda g: (g * on,), "relu")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    if not (a.data > 0).all():
        raise DomainError("log requires strictly positive inputs")
    return Tensor._result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def maximum(a: Tensor, floor: Scalar) -> Tensor:
    """Elementwise max against a constant; gradient flows where ``a > floor``."""
    keep = a.data > floor
    return Tensor._result(np.where(keep, a.data, floor), (a,), lambda g: (g * keep,), "maximum")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data.astype(np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    # keep the open interval (0, 1) in the working dtype
    info = np.finfo(_dtype)
    out = np.clip(out, info.tiny, 1.0 - info.epsneg).astype(_dtype)
    return Tensor._result(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted.astype(np.float64))
    out = (e / e.sum(axis=axis, keepdims=True)).astype(_dtype)

    def grad_fn(g):
        inner = (g * out).sum(axis=axis, keepdims=True, dtype=np.float64).astype(_dtype)
        return (out * (g - inner),)

    return Tensor._result(out, (a,), grad_fn, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data.astype(np.float64)
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = (shifted - lse).astype(_dtype)
    probs = np.exp(shifted - lse).astype(_dtype)

    def grad_fn(g):
        total = g.sum(axis=axis, keepdims=True, dtype=np.float64).astype(_dtype)
        return (g - probs * total,)

    return Tensor._result(out, (a,), grad_fn, "log_softmax")


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data.astype(np.float64)
    peak = x.max(axis=axis, keepdims=True)
    s = np.exp(x - peak).sum(axis=axis, keepdims=True)
    out_keep = peak + np.log(s)
    weights = np.exp(x - out_keep).astype(_dtype)
    out = np.squeeze(out_keep, axis=axis).astype(_dtype)
    return Tensor._result(out, (a,), lambda g: (np.expand_dims(g, axis) * weights,), "logsumexp")


# -- reductions and shape ----------------------------------------------------


def tsum(a: Tensor, axis=None) -> Tensor:
    out = a.data.sum(axis=axis, dtype=np.float64).astype(_dtype)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.dims).astype(_dtype),)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % a.ndim for ax in axes)
        return (np.broadcast_to(np.expand_dims(g, axes), a.dims).astype(_dtype),)

    return Tensor._result(out, (a,), grad_fn, "sum")


def mean(a: Tensor, axis=None) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.dims[ax] for ax in axes]))
    return scale(tsum(a, axis), 1.0 / count)


def reshape(a: Tensor, dims: Sequence[int]) -> Tensor:
    dims = tuple(int(d) for d in dims)
    try:
        out = a.data.reshape(dims)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.dims} to {dims}") from None
    return Tensor._result(out, (a,), lambda g: (g.reshape(a.dims),), "reshape")


def getitem(a: Tensor, index) -> Tensor:
    """Basic (slice / integer) indexing; advanced indexing is not supported."""
    out = a.data[index]

    def grad_fn(g):
        full = np.zeros(a.dims, dtype=_dtype)
        full[index] = g
        return (full,)

    return Tensor._result(np.array(out), (a,), grad_fn, "getitem")


def tile_batch(a: Tensor, k: int) -> Tensor:
    """Stack ``k`` copies along a new leading axis merged into axis 0."""
    out = np.broadcast_to(a.data, (k,) + a.dims).reshape((k * a.dims[0],) + a.dims[1:])
    return Tensor._result(
        np.ascontiguousarray(out),
        (a,),
        lambda g: (g.reshape((k,) + a.dims).sum(axis=0, dtype=np.float64).astype(_dtype),),
        "tile_batch",
    )


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got dims {a.dims}")
    return Tensor._result(np.ascontiguousarray(a.data.T), (a,), lambda g: (g.T,), "transpose")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.dims[1] != b.dims[0]:
        raise ShapeError(f"matmul: dims {a.dims} and {b.dims} do not chain")
    return Tensor._result(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


# -- differentiation ---------------------------------------------------------


def _graph_nodes(root: Tensor) -> list:
    seen = {root._id: root}
    stack = [root]
    while stack:
        node = stack.pop()
        for parent in node._parents:
            if parent._id not in seen:
                seen[parent._id] = parent
                stack.append(parent)
    return [seen[k] for k in sorted(seen, reverse=True)]


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every node reachable from a scalar ``loss``.

    Intermediate nodes receive their gradient; leaves accumulate into theirs.
    A second call on the same loss raises until :func:`reset` is called.
    """
    if loss.size != 1:
        raise GraphError(f"backward needs a scalar loss, got dims {loss.dims}")
    if loss._consumed:
        raise GraphError("backward already ran for this loss; call reset() first")
    if not loss.requires_grad:
        loss._consumed = True
        return
    pending = {loss._id: np.ones(loss.dims, dtype=loss.data.dtype)}
    for node in _graph_nodes(loss):
        g = pending.pop(node._id, None)
        if g is None:
            continue
        if node._grad_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node.grad = g
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=parent.data.dtype)
            if parent._id in pending:
                pending[parent._id] = pending[parent._id] + pg
            else:
                pending[parent._id] = pg
    loss._consumed = True


def reset(loss: Tensor) -> None:
    """Clear all gradients in the graph of ``loss`` and re-arm :func:`backward`."""
    for node in _graph_nodes(loss):
        node.grad = None
    loss._consumed = False
