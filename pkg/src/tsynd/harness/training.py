"""Classifier training in the baseline, noise and TSynD modes, plus the measure ablation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..diffcore import SeededRng, backward
from ..errors import ConfigError, DataError
from ..models import AutoencoderModel, ClassifierModel, classifier_spec
from ..neuralnet import Adam, ParameterStore, init_params, sample_masks
from ..synthesis import GenConfig, generate
from .data import Dataset, subsample
from .evaluation import Perturbation, cross_entropy, evaluate
from .metrics import MetricsRecord

MODES = ("baseline", "noise", "tsynd")
BatchHook = Callable[[int, int, np.ndarray, np.ndarray], None]


@dataclass
class RunConfig:
    mode: str = "baseline"
    fraction: float = 1.0
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    lr: float = 1e-3
    dropout: float = 0.5
    gen: GenConfig = field(default_factory=GenConfig)
    perturbations: Tuple[str, ...] = ("none", "gauss:0.2", "fgsm:0.1")
    run_id: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"fraction must lie in (0, 1], got {self.fraction}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch size must be positive")
        if self.mode != "baseline" and self.batch_size % 2:
            raise ConfigError("half-batch modes need an even batch size")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if isinstance(self.gen, dict):
            self.gen = GenConfig(**self.gen)
        self.perturbations = tuple(str(Perturbation.parse(p)) for p in self.perturbations)
        if self.run_id is None:
            self.run_id = self.mode

    def generation(self) -> GenConfig:
        """The generation settings the mode actually uses (noise mode never ascends)."""
        return replace(self.gen, iterations=0) if self.mode == "noise" else self.gen


@dataclass
class TrainResult:
    model: ClassifierModel
    metrics: List[MetricsRecord]
    best_epoch: int
    best_val_accuracy: float
    last_model: Optional[ClassifierModel] = None


def _mixed_batch(cfg: RunConfig, gen: GenConfig, x, y, idx, clf, ae, rng) -> Tuple[np.ndarray, list]:
    """Originals in the first ``ceil(b/2)`` slots, synthesized versions of the rest after them."""
    keep = len(x) - len(x) // 2
    if keep == len(x):
        return x, []
    records = generate(x[keep:], y[keep:], clf, ae, gen, rng, idx[keep:])
    synthetic = np.stack([r.image for r in records]).astype(np.float32)
    return np.concatenate([x[:keep], synthetic]), records


def train_classifier(
    cfg: RunConfig,
    train: Dataset,
    val: Dataset,
    ae: Optional[AutoencoderModel] = None,
    batch_hook: Optional[BatchHook] = None,
) -> TrainResult:
    """Train for ``cfg.epochs`` epochs and return the epoch with the highest val accuracy.

    Every random draw comes from a named sub-stream of ``cfg.seed``, so the three
    modes share initial weights, batch order and dropout masks. ``batch_hook``
    sees every training batch after mixing (used to compare modes).
    """
    if cfg.mode != "baseline" and ae is None:
        raise ConfigError(f"mode {cfg.mode!r} needs a trained autoencoder")
    if len(train) == 0 or len(val) == 0:
        raise DataError("training and validation sets must be non-empty")
    if tuple(val.image_dims) != tuple(train.image_dims):
        raise DataError("training and validation images disagree on dims")
    data = subsample(train, cfg.fraction, cfg.seed) if cfg.fraction < 1.0 else train
    channels, size, _ = data.image_dims
    root = SeededRng(cfg.seed)
    spec = classifier_spec(data.num_classes, in_channels=channels, size=size, dropout=cfg.dropout)
    model = ClassifierModel(spec, init_params(spec, root.child("init")))
    opt = Adam(cfg.lr)
    gen = cfg.generation()

    metrics: List[MetricsRecord] = []
    best_params: ParameterStore = model.params.copy()
    best_epoch, best_acc = -1, -1.0
    row = lambda epoch, split, metric, value: MetricsRecord(cfg.run_id, cfg.seed, epoch, split, "none", metric, float(value))

    for epoch in range(cfg.epochs):
        order = root.child("shuffle", epoch).permutation(len(data))
        loss_sum, u_gain, n_synth = 0.0, 0.0, 0
        for b, start in enumerate(range(0, len(data), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            x, y = data.images[idx], data.labels[idx]
            if cfg.mode != "baseline":
                x, records = _mixed_batch(cfg, gen, x, y, idx, model, ae, root.child("gen", epoch, b))
                u_gain += sum(r.final_u - r.initial_u for r in records)
                n_synth += len(records)
            if batch_hook is not None:
                batch_hook(epoch, b, x, y)
            masks = sample_masks(spec, 1, root.child("train-dropout", epoch, b), batch=len(x))[0]
            loss = cross_entropy(model.logits(x, masks), y)
            backward(loss)
            opt.step(model.params)
            loss_sum += float(loss.data) * len(x)
        acc = evaluate(model, val)
        metrics.append(row(epoch, "train", "loss", loss_sum / len(data)))
        if n_synth:
            metrics.append(row(epoch, "train", "u_gain", u_gain / n_synth))
        metrics.append(row(epoch, "val", "accuracy", acc))
        if acc > best_acc:
            best_acc, best_epoch = acc, epoch
            best_params = model.params.copy()
    return TrainResult(ClassifierModel(spec, best_params), metrics, best_epoch, best_acc, model)


def ablate_measure(
    cfg: RunConfig, train: Dataset, val: Dataset, ae: AutoencoderModel, measures: Sequence[str] = ("entropy", "mi")
) -> Dict[str, TrainResult]:
    """TSynD once per uncertainty measure under the same seed; run ids ``tsynd-<measure>``."""
    results = {}
    for measure in measures:
        run = replace(cfg, mode="tsynd", gen=replace(cfg.gen, measure=measure), run_id=f"tsynd-{measure}")
        results[measure] = train_classifier(run, train, val, ae)
    return results


def evaluation_rows(
    run_id: str, seed: int, epoch: int, model: ClassifierModel, test: Dataset, perturbations, eval_seed: Optional[int] = None
) -> List[MetricsRecord]:
    """One accuracy row per perturbation on the test split."""
    rows = []
    for p in perturbations:
        pert = Perturbation.parse(p)
        acc = evaluate(model, test, pert, seed if eval_seed is None else eval_seed)
        rows.append(MetricsRecord(run_id, seed, epoch, "test", str(pert), "accuracy", acc))
    return rows
