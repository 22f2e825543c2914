"""Targeted synthesis: latent noise, uncertainty ascent and half-batch assembly.

Samples are processed as one batch through the frozen decoder and classifier.
Every sample draws its noise and dropout masks from its own sub-stream
(``rng.child("noise", i)`` / ``rng.child("dropout", i)``), so its result does
not depend on how the batch was cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .diffcore import SeededRng, Tensor, backward, getitem, mul, reshape, tsum
from .errors import NonFiniteError, ShapeError
from .models import AutoencoderModel, ClassifierModel, LatentCode, encode_batch
from .neuralnet import DropoutMaskSet, sample_masks, stack_mask_sets
from .uncertainty import canonical_measure, probabilities, uncertainty_of_images

MAX_HALVINGS = 5


@dataclass
class GenConfig:
    measure: str = "mi"
    lr: float = 0.1
    iterations: int = 50
    sigma: float = 0.1
    K: int = 8
    monotone: bool = False
    noise_first: bool = True
    noise_kind: str = "gaussian"

    def __post_init__(self):
        self.measure = canonical_measure(self.measure)
        if not self.lr > 0:
            raise ValueError("ascent learning rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.noise_kind not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SynthesisRecord:
    source_index: Optional[int]
    label: Optional[int]
    initial_latent: np.ndarray
    final_latent: np.ndarray
    initial_u: float
    final_u: float
    trace: List[float]
    image: np.ndarray
    aborted: bool = False
    masks: Optional[DropoutMaskSet] = field(default=None, repr=False)
    objective: str = "mi"
    image_difference: Optional[np.ndarray] = field(default=None, repr=False)

    def sidecar(self) -> dict:
        out = {
            "source_index": self.source_index,
            "label": self.label,
            "objective": self.objective,
            "U_initial": self.initial_u,
            "U_final": self.final_u,
            "trace": list(self.trace),
            "aborted": self.aborted,
        }
        if self.image_difference is not None:
            out["image_difference"] = float(np.abs(self.image_difference).mean())
        return out


def latent_noise(z: LatentCode, sigma: float, rng: SeededRng, kind: str = "gaussian") -> LatentCode:
    """``z + sigma * g`` with ``g`` standard normal (or unit-variance uniform)."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if kind == "gaussian":
        g = rng.normal(z.value.shape)
    elif kind == "uniform":
        g = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), z.value.shape)
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    noised = z.value + np.float32(sigma) * g.astype(np.float32)
    return z.evolve(noised, "noised")


# -- objective ----------------------------------------------------------------


def _objective(clf, ae, z: np.ndarray, measure: str, masks, need_grad: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    zt = Tensor(z, requires_grad=need_grad)
    u = uncertainty_of_images(clf, ae.decode_tensor(zt), measure, masks)
    if not need_grad:
        return u.data.copy(), None
    backward(tsum(u))
    return u.data.copy(), zt.grad.copy()


def _sample_ascent_masks(clf: ClassifierModel, n: int, cfg: GenConfig, rngs: Sequence[SeededRng]) -> Optional[DropoutMaskSet]:
    if cfg.measure != "mi":
        return None
    return stack_mask_sets([sample_masks(clf.spec, cfg.K, rngs[i].child("dropout"), start=clf.split) for i in range(n)])


def _ascend(clf, ae, z0: np.ndarray, cfg: GenConfig, masks) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed-step gradient ascent on a batch of latents; returns final z and the U trace."""
    z = z0.copy()
    u, g = _objective(clf, ae, z, cfg.measure, masks, True)
    trace = [u]
    lr = np.float32(cfg.lr)
    for _ in range(cfg.iterations):
        cand = z + lr * g
        if cfg.monotone:
            u_cand, _ = _objective(clf, ae, cand, cfg.measure, masks, False)
            step = lr
            for _ in range(MAX_HALVINGS):
                worse = u_cand < u
                if not worse.any():
                    break
                step = step * np.float32(0.5)
                cand[worse] = z[worse] + step * g[worse]
                u_cand, _ = _objective(clf, ae, cand, cfg.measure, masks, False)
            worse = u_cand < u
            cand[worse] = z[worse]
        z = cand
        u, g = _objective(clf, ae, z, cfg.measure, masks, True)
        trace.append(u)
    return z, np.stack(trace, axis=1)


def maximize_uncertainty_batch(
    latents: Sequence[LatentCode],
    clf: ClassifierModel,
    ae: AutoencoderModel,
    cfg: GenConfig,
    rngs: Sequence[SeededRng],
) -> List[SynthesisRecord]:
    """Ascend every latent in ``latents`` on U; masks are drawn once per sample at entry."""
    if not latents:
        return []
    for z in latents:
        if tuple(z.value.shape) != tuple(ae.latent_dims):
            raise ShapeError(f"latent dims {z.value.shape} do not match {ae.latent_dims}")
    clf_f, ae_f = clf.frozen(), ae.frozen()
    z0 = np.stack([z.value for z in latents]).astype(np.float32)
    masks = _sample_ascent_masks(clf_f, len(latents), cfg, rngs)
    try:
        z_final, trace = _ascend(clf_f, ae_f, z0, cfg, masks)
        aborted = np.zeros(len(latents), dtype=bool)
    except NonFiniteError:
        if len(latents) == 1:
            return [_aborted_record(latents[0], clf_f, ae_f, cfg, masks)]
        return [rec for i, z in enumerate(latents) for rec in maximize_uncertainty_batch([z], clf, ae, cfg, [rngs[i]])]
    images = ae_f.decode_tensor(z_final).data
    records = []
    for i, z in enumerate(latents):
        records.append(
            SynthesisRecord(
                source_index=z.source_index,
                label=z.label,
                initial_latent=z.value,
                final_latent=z_final[i],
                initial_u=float(trace[i, 0]),
                final_u=float(trace[i, -1]),
                trace=[float(v) for v in trace[i]],
                image=images[i],
                aborted=bool(aborted[i]),
                masks=_slice_masks(masks, i),
                objective=cfg.measure,
            )
        )
    return records


def _slice_masks(masks: Optional[DropoutMaskSet], i: int) -> Optional[DropoutMaskSet]:
    if masks is None:
        return None
    return DropoutMaskSet([[m[i] for m in c] for c in masks.collections], list(masks.probs))


def _aborted_record(z: LatentCode, clf, ae, cfg: GenConfig, masks) -> SynthesisRecord:
    image = ae.decode_tensor(z.value[None]).data[0]
    try:
        u0 = float(_objective(clf, ae, z.value[None], cfg.measure, masks, False)[0][0])
    except NonFiniteError:
        u0 = float("nan")
    return SynthesisRecord(z.source_index, z.label, z.value, z.value, u0, u0, [u0], image, True, masks, cfg.measure)


def maximize_uncertainty(z0: LatentCode, clf: ClassifierModel, ae: AutoencoderModel, cfg: GenConfig, rng: SeededRng) -> SynthesisRecord:
    return maximize_uncertainty_batch([z0], clf, ae, cfg, [rng])[0]


def recompute_uncertainty(clf, ae, latents: np.ndarray, measure: str, masks=None) -> np.ndarray:
    """U at a batch of latents; ``masks`` is a batched set or one per-sample set per latent."""
    if isinstance(masks, (list, tuple)):
        masks = stack_mask_sets(masks)
    return _objective(clf.frozen(), ae.frozen(), np.asarray(latents, dtype=np.float32), canonical_measure(measure), masks, False)[0]


# -- training-batch assembly --------------------------------------------------


def generate(
    images: np.ndarray,
    labels: np.ndarray,
    clf: ClassifierModel,
    ae: AutoencoderModel,
    cfg: GenConfig,
    rng: SeededRng,
    indices: Optional[Sequence[int]] = None,
) -> List[SynthesisRecord]:
    """Encode, optionally perturb, then ascend every image; one record per image."""
    images = np.asarray(images, dtype=np.float32)
    ae_f = ae.frozen()
    codes = encode_batch(ae_f, images)
    rngs = [rng.child(i) for i in range(len(images))]
    latents = []
    for i, z in enumerate(codes):
        src = None if indices is None else int(indices[i])
        code = LatentCode(z, "encoded", src, int(labels[i]))
        if cfg.noise_first:
            code = latent_noise(code, cfg.sigma, rngs[i].child("noise"), cfg.noise_kind)
        latents.append(code)
    return maximize_uncertainty_batch(latents, clf, ae_f, cfg, rngs)


def synth_half_batch(
    images: np.ndarray,
    labels: np.ndarray,
    clf: ClassifierModel,
    ae: AutoencoderModel,
    cfg: GenConfig,
    rng: SeededRng,
    indices: Optional[Sequence[int]] = None,
) -> Tuple[np.ndarray, np.ndarray, List[SynthesisRecord]]:
    """Keep the first half of the batch and replace the second with synthesized images."""
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    b = len(images)
    if b % 2 or b == 0:
        raise ShapeError(f"half-batch synthesis needs an even, non-empty batch (got {b})")
    half = b // 2
    src = None if indices is None else list(indices)[half:]
    records = generate(images[half:], labels[half:], clf, ae, cfg, rng, src)
    synthetic = np.stack([r.image for r in records]).astype(np.float32)
    return np.concatenate([images[:half], synthetic]), np.concatenate([labels[:half], labels[half:]]), records


# -- class-probability minimization ------------------------------------------


def _class_probability(clf, ae, z: np.ndarray, targets: np.ndarray, need_grad: bool):
    zt = Tensor(z, requires_grad=need_grad)
    p = probabilities(clf.logits(ae.decode_tensor(zt)))
    onehot = np.zeros(p.dims, dtype=np.float32)
    onehot[np.arange(len(targets)), targets] = 1.0
    py = tsum(mul(p, Tensor(onehot)), axis=-1)
    if not need_grad:
        return py.data.copy(), None
    backward(tsum(py))
    return py.data.copy(), zt.grad.copy()


def minimize_class_probability_batch(
    latents: Sequence[LatentCode],
    targets: Sequence[int],
    clf: ClassifierModel,
    ae: AutoencoderModel,
    steps: int,
    lr: float,
) -> List[SynthesisRecord]:
    """Gradient descent on ``p(target | z)`` (inference-mode forward)."""
    if steps < 0 or not lr > 0:
        raise ValueError("steps must be non-negative and lr positive")
    clf_f, ae_f = clf.frozen(), ae.frozen()
    targets = np.asarray(targets, dtype=np.int64)
    z0 = np.stack([z.value for z in latents]).astype(np.float32)
    z = z0.copy()
    p, g = _class_probability(clf_f, ae_f, z, targets, True)
    trace = [p]
    for _ in range(steps):
        z = z - np.float32(lr) * g
        p, g = _class_probability(clf_f, ae_f, z, targets, True)
        trace.append(p)
    trace = np.stack(trace, axis=1)
    start = ae_f.decode_tensor(z0).data
    end = ae_f.decode_tensor(z).data
    return [
        SynthesisRecord(
            source_index=code.source_index,
            label=code.label,
            initial_latent=code.value,
            final_latent=z[i],
            initial_u=float(trace[i, 0]),
            final_u=float(trace[i, -1]),
            trace=[float(v) for v in trace[i]],
            image=end[i],
            objective="class-probability",
            image_difference=end[i] - start[i],
        )
        for i, code in enumerate(latents)
    ]


def minimize_class_probability(z0: LatentCode, target: int, clf: ClassifierModel, ae: AutoencoderModel, steps: int, lr: float) -> SynthesisRecord:
    return minimize_class_probability_batch([z0], [target], clf, ae, steps, lr)[0]
