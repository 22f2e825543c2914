"""Central-difference gradient oracle."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward, precision


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    point,
    h: float = 1e-3,
    coords: Optional[Sequence[int]] = None,
    dtype=np.float64,
) -> float:
    """Max relative error between backprop and central differences of ``f``.

    ``f`` maps a tensor shaped like ``point`` to a scalar tensor. The error at
    each flat coordinate is ``|analytic - numeric| / max(1e-8, |numeric|)``.
    ``coords`` restricts the comparison to a subset of flat indices, which
    keeps checks on large parameter tensors affordable. Everything is
    evaluated in ``dtype`` (float64 by default).
    """
    with precision(dtype):
        base = np.array(point.data if isinstance(point, Tensor) else point, dtype=dtype)
        x = Tensor(base, requires_grad=True)
        out = f(x)
        backward(out)
        analytic = np.zeros_like(base) if x.grad is None else x.grad.reshape(-1)
        flat = base.reshape(-1)
        idx = range(flat.size) if coords is None else coords
        worst = 0.0
        for i in idx:
            probe = flat.copy()
            probe[i] = flat[i] + h
            up = float(f(Tensor(probe.reshape(base.shape))).data)
            probe[i] = flat[i] - h
            down = float(f(Tensor(probe.reshape(base.shape))).data)
            numeric = (up - down) / (2 * h)
            err = abs(float(analytic.reshape(-1)[i]) - numeric) / max(1e-8, abs(numeric))
            worst = max(worst, err)
    return worst
