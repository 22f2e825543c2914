"""Predictive distributions under MC dropout, entropy and mutual information.

All logarithms are natural (nats). Binary sigmoid heads are expanded to the
pair ``[p, 1 - p]`` so one code path serves both output types.

Means over the ``K`` dropout samples are anchored on the first sample,
``mean_k x_k = x_0 + mean_k (x_k - x_0)``, which is exact when every sample
agrees, so a dropout rate of zero gives a mutual information of exactly 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from .diffcore import (
    SeededRng,
    Tensor,
    as_tensor,
    exp,
    getitem,
    log,
    log_softmax,
    matmul,
    maximum,
    mean,
    mul,
    negate,
    reshape,
    softmax,
    sub,
    tile_batch,
    tsum,
)
from .diffcore.tensor import add
from .errors import DomainError, ShapeError
from .neuralnet import DropoutMaskSet, sample_masks, stack_mask_sets

MEASURES = ("entropy", "mi")
_BINARY_EXPAND = np.array([[1.0, 0.0]], dtype=np.float32)


def canonical_measure(measure: str) -> str:
    aliases = {"entropy": "entropy", "mi": "mi", "mutual-information": "mi", "mutual_information": "mi"}
    if measure not in aliases:
        raise ValueError(f"unknown uncertainty measure {measure!r}")
    return aliases[measure]


# -- graph (differentiable) forms --------------------------------------------


def categorical_logits(logits: Tensor) -> Tensor:
    """``N x 1`` sigmoid logits become ``[l, 0]`` so softmax yields ``[sigmoid(l), 1 - sigmoid(l)]``."""
    if logits.dims[-1] != 1:
        return logits
    flat = reshape(logits, (-1, 1))
    pair = matmul(flat, Tensor(_BINARY_EXPAND))
    return reshape(pair, logits.dims[:-1] + (2,))


def probabilities(logits: Tensor) -> Tensor:
    return softmax(categorical_logits(logits), axis=-1)


def entropy_from_logits(logits: Tensor) -> Tensor:
    """Per-row entropy ``-sum p log p`` computed from logits (no ``log 0``)."""
    logp = log_softmax(categorical_logits(logits), axis=-1)
    return negate(tsum(mul(exp(logp), logp), axis=-1))


def mutual_information_from_logits(logits: Tensor, K: int) -> Tensor:
    """Per-query MI from ``(K*N) x |Y|`` logits stacked sample-major."""
    logits = categorical_logits(logits)
    kn, classes = logits.dims
    if kn % K:
        raise ShapeError(f"{kn} logit rows are not a multiple of K={K}")
    n = kn // K
    p = reshape(softmax(logits, axis=-1), (K, n, classes))
    tiny = float(np.finfo(p.data.dtype).tiny)
    # one entropy expression for both terms so identical samples cancel exactly
    plogp = lambda q: negate(tsum(mul(q, log(maximum(q, tiny))), axis=-1))
    h_each = plogp(p)  # K x N
    h0 = getitem(h_each, 0)
    h_mean = add(h0, mean(sub(h_each, h0), axis=0))
    p0 = getitem(p, 0)
    p_mean = add(p0, mean(sub(p, p0), axis=0))
    return sub(plogp(p_mean), h_mean)


def uncertainty_of_images(clf, images: Tensor, measure: str, masks: Optional[DropoutMaskSet] = None) -> Tensor:
    """Per-image U for a batch of images; ``masks`` must carry a batch axis for MI."""
    measure = canonical_measure(measure)
    if measure == "entropy":
        return entropy_from_logits(clf.logits(images))
    if masks is None:
        raise ValueError("mutual information needs a dropout mask set")
    trunk = clf.trunk(images)
    logits = clf.head(tile_batch(trunk, masks.K), masks.stacked())
    return mutual_information_from_logits(logits, masks.K)


# -- reports over plain arrays -----------------------------------------------


@dataclass
class PredictiveSamples:
    """``K`` probability vectors (``K x |Y|``, or ``K x N x |Y|`` for a batch)."""

    probs: np.ndarray
    masks: Optional[DropoutMaskSet] = None

    @property
    def K(self) -> int:
        return self.probs.shape[0]


@dataclass
class UncertaintyReport:
    entropy: float
    mutual_information: float
    mean_distribution: np.ndarray
    sample_entropies: np.ndarray


def _validate(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0 or not np.isfinite(p).all() or (p < 0).any():
        raise DomainError("probabilities must be finite and non-negative")
    if np.abs(p.sum(axis=-1) - 1.0).max() > 1e-6:
        raise DomainError("probabilities must sum to 1 within 1e-6")
    return p


def _entropy(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    logs = np.log(np.where(p > 0, p, 1.0))
    return -(p * logs).sum(axis=-1)


def entropy(p) -> float:
    """Natural-log entropy of one categorical distribution; ``0 log 0 = 0``."""
    p = _validate(p)
    if p.ndim != 1:
        raise ShapeError("entropy expects a single probability vector")
    return float(_entropy(p))


def predictive_distribution(clf, x, mask=None) -> np.ndarray:
    """``sigma(C(x))`` as a categorical vector (a batch gives one row per input)."""
    return probabilities(clf.logits(as_tensor(x), mask)).data.astype(np.float64)


def mc_samples(clf, x, K: int, rng: SeededRng, p_override: Optional[float] = None) -> PredictiveSamples:
    """One trunk pass, then ``K`` head passes under independent dropout masks.

    A single input gets one mask set; a batch gets one per sample drawn from
    ``rng.child(i)``, so a sample's masks do not depend on its batch-mates.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    x = as_tensor(x)
    single = tuple(x.dims) == tuple(clf.input_dims)
    batch = reshape(x, (1,) + x.dims) if single else x
    n = batch.dims[0]
    if single:
        masks = stack_mask_sets([sample_masks(clf.spec, K, rng, p_override, start=clf.split)])
    else:
        masks = stack_mask_sets([sample_masks(clf.spec, K, rng.child(i), p_override, start=clf.split) for i in range(n)])
    trunk = clf.trunk(batch)
    logits = clf.head(tile_batch(trunk, K), masks.stacked())
    probs = probabilities(logits).data.astype(np.float64).reshape(K, n, -1)
    return PredictiveSamples(probs[:, 0] if single else probs, masks)


def _report(probs: np.ndarray) -> UncertaintyReport:
    h_each = _entropy(probs)
    p_mean = probs[0] + (probs - probs[0]).mean(axis=0)
    h_bar = h_each[0] + (h_each - h_each[0]).mean()
    h_of_mean = float(_entropy(p_mean))
    mi = max(h_of_mean - float(h_bar), -1e-9)
    return UncertaintyReport(h_of_mean, mi, p_mean, h_each)


def mutual_information(samples: Union[PredictiveSamples, np.ndarray]) -> Union[UncertaintyReport, List[UncertaintyReport]]:
    """``H(mean_k p_k) - mean_k H(p_k)``; batched samples give one report per query."""
    probs = samples.probs if isinstance(samples, PredictiveSamples) else np.asarray(samples)
    if probs.ndim < 2 or probs.shape[0] < 1:
        raise ValueError("need at least one sample")
    probs = _validate(probs)
    if probs.ndim == 2:
        return _report(probs)
    return [_report(probs[:, i]) for i in range(probs.shape[1])]
