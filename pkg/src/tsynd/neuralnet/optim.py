"""First-order update rules. State lives on each :class:`Parameter`."""

from __future__ import annotations

import numpy as np

from ..errors import MissingGradientError
from .params import ParameterStore


def _require_grads(params: ParameterStore) -> None:
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise MissingGradientError(f"no gradient for {missing[:3]}{'...' if len(missing) > 3 else ''}")


def sgd_step(params: ParameterStore, lr: float, momentum: float = 0.0) -> None:
    _require_grads(params)
    for name, p in params.items():
        g = p.grad.astype(np.float32)
        if momentum:
            buf = p.state.get("momentum")
            buf = g if buf is None else momentum * buf + g
            p.state["momentum"] = buf
            g = buf
        params.set_value(name, p.value.data - lr * g)
    params.step_count += 1


def adam_step(
    params: ParameterStore,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    _require_grads(params)
    t = params.step_count + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = p.grad.astype(np.float32)
        m = p.state.get("m")
        v = p.state.get("v")
        m = (1 - beta1) * g if m is None else beta1 * m + (1 - beta1) * g
        v = (1 - beta2) * g * g if v is None else beta2 * v + (1 - beta2) * g * g
        p.state["m"], p.state["v"] = m, v
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        params.set_value(name, p.value.data - update)
    params.step_count = t


class Adam:
    """Bound hyperparameters for :func:`adam_step`; serializable into checkpoints."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def step(self, params: ParameterStore) -> None:
        adam_step(params, self.lr, self.beta1, self.beta2, self.eps)

    def hyperparameters(self) -> dict:
        return {"algorithm": "adam", "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


class SGD:
    def __init__(self, lr: float, momentum: float = 0.0):
        self.lr, self.momentum = lr, momentum

    def step(self, params: ParameterStore) -> None:
        sgd_step(params, self.lr, self.momentum)

    def hyperparameters(self) -> dict:
        return {"algorithm": "sgd-momentum", "lr": self.lr, "momentum": self.momentum}
