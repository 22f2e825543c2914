"""Named trainable tensors, their gradients and optimizer state."""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np

from ..diffcore import SeededRng, Tensor
from .spec import PARAMETRIC, NetworkSpec, fan_in


@dataclass
class Parameter:
    value: Tensor
    state: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def grad(self) -> Optional[np.ndarray]:
        return self.value.grad


class ParameterStore:
    """Ordered ``name -> Parameter`` map."""

    def __init__(self, items: Optional[Mapping[str, np.ndarray]] = None):
        self._params: "OrderedDict[str, Parameter]" = OrderedDict()
        self.step_count = 0
        for name, value in (items or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> None:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        self._params[name] = Parameter(Tensor(value, requires_grad=True))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name].value

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def names(self):
        return list(self._params)

    def items(self) -> Iterator[Tuple[str, Parameter]]:
        return iter(self._params.items())

    def parameter(self, name: str) -> Parameter:
        return self._params[name]

    def set_value(self, name: str, data: np.ndarray) -> None:
        self._params[name].value = Tensor(data, requires_grad=True)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.value.grad = None

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, p.value.data) for k, p in self._params.items())

    def copy(self) -> "ParameterStore":
        """Deep copy of values (fresh leaves, no gradients, no optimizer state)."""
        return ParameterStore(self.arrays())

    def with_value(self, name: str, value: Tensor) -> "ParameterStore":
        """Shallow copy in which ``name`` is replaced by ``value`` (for gradient checks)."""
        out = ParameterStore()
        out._params = OrderedDict(
            (k, Parameter(value) if k == name else Parameter(p.value)) for k, p in self._params.items()
        )
        return out

    def frozen(self) -> "ParameterStore":
        """Constant view of the current values: no copies, and backward never touches it."""
        out = ParameterStore()
        out._params = OrderedDict((k, Parameter(Tensor.wrap(p.value.data))) for k, p in self._params.items())
        return out

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name, p in self._params.items():
            h.update(name.encode("utf-8"))
            h.update(str(p.value.dims).encode("ascii"))
            h.update(np.ascontiguousarray(p.value.data, dtype="<f4").tobytes())
        return h.hexdigest()

    def prefixed(self, prefix: str) -> "ParameterStore":
        """View of the parameters whose names start with ``prefix`` (prefix stripped)."""
        out = ParameterStore()
        out._params = OrderedDict(
            (k[len(prefix):], p) for k, p in self._params.items() if k.startswith(prefix)
        )
        return out


def init_params(spec: NetworkSpec, rng: SeededRng, prefix: str = "") -> ParameterStore:
    """He-uniform weights (bound ``sqrt(6 / fan_in)``) and zero biases."""
    spec.validate()
    trace = spec.dims_trace()
    shapes = spec.param_shapes()
    store = ParameterStore()
    for i, layer in enumerate(spec.layers):
        if layer.kind not in PARAMETRIC:
            continue
        wname, bname = f"{i}.weight", f"{i}.bias"
        bound = math.sqrt(6.0 / fan_in(layer, trace[i]))
        stream = rng.child(prefix + wname)
        store.add(prefix + wname, stream.uniform(-bound, bound, shapes[wname]))
        store.add(prefix + bname, np.zeros(shapes[bname]))
    return store
