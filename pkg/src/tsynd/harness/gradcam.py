"""Gradient-weighted class activation maps on the last conv layer."""

from __future__ import annotations

import numpy as np

from ..diffcore import Tensor, backward, getitem, negate
from ..errors import ShapeError
from ..models import ClassifierModel
from ..neuralnet import forward


def _bilinear(maps: np.ndarray, height: int, width: int) -> np.ndarray:
    """Align-corners bilinear resize of a 2-D map."""
    h, w = maps.shape
    ys = np.linspace(0.0, h - 1, height) if h > 1 else np.zeros(height)
    xs = np.linspace(0.0, w - 1, width) if w > 1 else np.zeros(width)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = maps[np.ix_(y0, x0)] * (1 - fx) + maps[np.ix_(y0, x1)] * fx
    bottom = maps[np.ix_(y1, x0)] * (1 - fx) + maps[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bottom * fy


def gradcam(model: ClassifierModel, x, class_index: int) -> np.ndarray:
    """H x W heatmap in [0, 1] for one image and one class logit."""
    x = np.asarray(x, dtype=np.float32)
    if tuple(x.shape) != tuple(model.input_dims):
        raise ShapeError(f"gradcam expects a single image of dims {model.input_dims}, got {x.shape}")
    frozen = model.frozen()
    layer = frozen.last_conv_index()
    # use the activations after the conv's ReLU when there is one
    if layer + 1 < len(frozen.spec.layers) and frozen.spec.layers[layer + 1].kind == "relu":
        layer += 1
    if frozen.num_logits == 1:
        if class_index not in (0, 1):
            raise ValueError("class index out of range")
    elif not 0 <= class_index < frozen.num_logits:
        raise ValueError("class index out of range")
    acts = forward(frozen.spec, frozen.params, x[None], stop=layer + 1)
    leaf = Tensor(acts.data, requires_grad=True)
    out = forward(frozen.spec, frozen.params, leaf, start=layer + 1)
    score = getitem(out, (0, 0 if frozen.num_logits == 1 else class_index))
    if frozen.num_logits == 1 and class_index == 1:
        score = negate(score)
    backward(score)
    grads = leaf.grad[0]
    weights = grads.mean(axis=(1, 2))
    cam = np.maximum((weights[:, None, None] * leaf.data[0]).sum(axis=0), 0.0)
    heat = _bilinear(cam.astype(np.float64), x.shape[1], x.shape[2])
    peak = heat.max()
    return (heat / peak if peak > 0 else np.zeros_like(heat)).astype(np.float32)
