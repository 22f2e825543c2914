"""Accuracy under clean, Gaussian-noise and FGSM-perturbed inputs."""

from __future__ import annotations

import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..diffcore import SeededRng, Tensor, backward, log_softmax, mul, negate, tsum
from ..errors import ShapeError
from ..models import ClassifierModel
from ..uncertainty import categorical_logits
from .data import Dataset

CHUNK = 256


@dataclass(frozen=True)
class Perturbation:
    kind: str = "none"  # none | gauss | fgsm
    strength: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gauss", "fgsm"):
            raise ValueError(f"unknown perturbation {self.kind!r}")
        if self.strength < 0:
            raise ValueError("perturbation strength must be non-negative")

    def __str__(self) -> str:
        return "none" if self.kind == "none" else f"{self.kind}:{self.strength:g}"

    @classmethod
    def parse(cls, text) -> "Perturbation":
        if isinstance(text, Perturbation):
            return text
        text = str(text).strip().lower()
        if text == "none":
            return cls()
        m = re.fullmatch(r"(gauss|gaussian|fgsm)\s*[:(=]\s*([0-9.eE+-]+)\)?", text)
        if not m:
            raise ValueError(f"cannot parse perturbation {text!r}")
        kind = "gauss" if m.group(1).startswith("gauss") else "fgsm"
        return cls(kind, float(m.group(2)))


def cross_entropy(logits: Tensor, labels: np.ndarray, reduce: str = "mean") -> Tensor:
    logp = log_softmax(categorical_logits(logits), axis=-1)
    onehot = np.zeros(logp.dims, dtype=np.float32)
    onehot[np.arange(len(labels)), labels] = 1.0
    total = negate(tsum(mul(logp, Tensor(onehot))))
    return mul(total, 1.0 / len(labels)) if reduce == "mean" else total


def fgsm(model: ClassifierModel, x: np.ndarray, y: np.ndarray, eps: float) -> np.ndarray:
    """``clamp(x + eps * sign(grad_x loss), 0, 1)`` with one forward and one backward pass."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    x = np.asarray(x, dtype=np.float32)
    frozen = model.frozen()
    batch = x if x.ndim == 4 else x[None]
    labels = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if tuple(batch.shape[1:]) != tuple(model.input_dims):
        raise ShapeError(f"input dims {x.shape} do not match {model.input_dims}")
    xt = Tensor(batch, requires_grad=True)
    backward(cross_entropy(frozen.logits(xt), labels, reduce="sum"))
    adv = np.clip(batch + np.float32(eps) * np.sign(xt.grad).astype(np.float32), 0.0, 1.0)
    return adv if x.ndim == 4 else adv[0]


def gaussian_perturb(x: np.ndarray, sigma: float, seed: int, offset: int = 0) -> np.ndarray:
    root = SeededRng(seed).child("eval-noise")
    noise = np.stack([root.child(offset + i).normal(x.shape[1:]) for i in range(len(x))]).astype(np.float32)
    return np.clip(x + np.float32(sigma) * noise, 0.0, 1.0)


def _threads() -> int:
    try:
        return max(0, int(os.environ.get("TSYND_THREADS", "0")))
    except ValueError:
        return 0


def predict(model: ClassifierModel, images: np.ndarray) -> np.ndarray:
    """Inference-mode class predictions, computed in chunks."""
    frozen = model.frozen()
    preds = []
    for start in range(0, len(images), CHUNK):
        logits = frozen.logits(images[start : start + CHUNK]).data
        preds.append(logits.argmax(axis=-1) if logits.shape[-1] > 1 else (logits[:, 0] <= 0).astype(np.int64))
    return np.concatenate(preds)


def evaluate(model: ClassifierModel, d: Dataset, perturbation="none", seed: int = 0, threads: Optional[int] = None) -> float:
    """Fraction of argmax-correct predictions after perturbing each sample."""
    pert = Perturbation.parse(perturbation)
    if tuple(d.image_dims) != tuple(model.input_dims):
        raise ShapeError(f"dataset dims {d.image_dims} do not match model {model.input_dims}")

    def chunk_correct(start: int) -> int:
        x = d.images[start : start + CHUNK]
        y = d.labels[start : start + CHUNK]
        if pert.kind == "gauss":
            x = gaussian_perturb(x, pert.strength, seed, start)
        elif pert.kind == "fgsm":
            x = fgsm(model, x, y, pert.strength)
        return int((predict(model, x) == y).sum())

    starts = range(0, len(d), CHUNK)
    workers = _threads() if threads is None else threads
    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            correct = list(pool.map(chunk_correct, starts))
    else:
        correct = [chunk_correct(s) for s in starts]
    return sum(correct) / len(d)
