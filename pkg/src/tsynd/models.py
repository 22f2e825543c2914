"""Desk-scale classifier and convolutional autoencoder."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from .diffcore import SeededRng, Tensor, as_tensor, backward, mean, mul, sub
from .errors import DataError, ShapeError, SpecError
from .neuralnet import (
    Adam,
    Conv,
    ConvTranspose,
    Dense,
    Dropout,
    Flatten,
    NetworkSpec,
    ParameterStore,
    ReLU,
    Sigmoid,
    forward,
    init_params,
    read_checkpoint,
    save_checkpoint,
)

PROVENANCES = ("encoded", "noised", "optimized")


def classifier_spec(
    num_classes: int,
    in_channels: int = 1,
    size: int = 28,
    dropout: float = 0.5,
    hidden: int = 64,
    binary_head: bool = False,
) -> NetworkSpec:
    """Two strided convs, then a dense head with dropout after its two hidden layers.

    ``binary_head`` emits a single logit (sigmoid classifier) for two classes.
    """
    out = 1 if binary_head else num_classes
    if binary_head and num_classes != 2:
        raise SpecError("a binary head needs exactly two classes")
    return NetworkSpec(
        (in_channels, size, size),
        (
            Conv(16, 4, stride=2, padding=1),
            ReLU(),
            Conv(32, 4, stride=2, padding=1),
            ReLU(),
            Flatten(),
            Dense(hidden),
            ReLU(),
            Dropout(dropout),
            Dense(hidden),
            ReLU(),
            Dropout(dropout),
            Dense(out),
        ),
    ).validate()


def encoder_spec(in_channels: int = 1, size: int = 28, latent_channels: int = 8) -> NetworkSpec:
    return NetworkSpec(
        (in_channels, size, size),
        (Conv(16, 4, stride=2, padding=1), ReLU(), Conv(latent_channels, 4, stride=2, padding=1)),
    ).validate()


def decoder_spec(out_channels: int = 1, size: int = 28, latent_channels: int = 8) -> NetworkSpec:
    return NetworkSpec(
        (latent_channels, size // 4, size // 4),
        (
            ConvTranspose(16, 4, stride=2, padding=1),
            ReLU(),
            ConvTranspose(out_channels, 4, stride=2, padding=1),
            Sigmoid(),
        ),
    ).validate()


class ClassifierModel:
    """Classifier whose head (from the first dropout layer on) can be re-run per mask."""

    def __init__(self, spec: NetworkSpec, params: ParameterStore):
        spec.validate()
        drops = spec.dropout_indices()
        if not drops:
            raise SpecError("classifier needs at least one dropout layer in its head")
        self.spec = spec
        self.params = params
        self.split = drops[0]
        self.trunk_calls = 0

    @classmethod
    def build(cls, num_classes: int, rng: SeededRng, **kwargs) -> "ClassifierModel":
        spec = classifier_spec(num_classes, **kwargs)
        return cls(spec, init_params(spec, rng))

    @property
    def input_dims(self):
        return self.spec.input_dims

    @property
    def num_logits(self) -> int:
        return self.spec.output_dims[0]

    @property
    def num_classes(self) -> int:
        return 2 if self.num_logits == 1 else self.num_logits

    def logits(self, x, masks=None) -> Tensor:
        return forward(self.spec, self.params, x, masks)

    def trunk(self, x) -> Tensor:
        self.trunk_calls += 1
        return forward(self.spec, self.params, x, stop=self.split)

    def head(self, h, masks=None) -> Tensor:
        return forward(self.spec, self.params, h, masks, start=self.split)

    def frozen(self) -> "ClassifierModel":
        return type(self)(self.spec, self.params.frozen())

    def last_conv_index(self) -> int:
        convs = [i for i, layer in enumerate(self.spec.layers) if isinstance(layer, Conv)]
        if not convs:
            raise SpecError("model has no conv layer")
        return convs[-1]

    def save(self, path: Union[str, os.PathLike], optimizer: Optional[dict] = None, meta: Optional[dict] = None) -> None:
        save_checkpoint(self.params, self.spec, path, optimizer, meta)

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "ClassifierModel":
        ckpt = read_checkpoint(path)
        if not isinstance(ckpt.spec, NetworkSpec):
            raise SpecError(f"{path} does not hold a single-network classifier")
        model = cls(ckpt.spec, ckpt.params)
        model.meta = ckpt.meta
        return model


class AutoencoderModel:
    """Encoder/decoder pair sharing one parameter store (``encoder.*``, ``decoder.*``)."""

    def __init__(self, encoder: NetworkSpec, decoder: NetworkSpec, params: ParameterStore):
        if tuple(encoder.output_dims) != tuple(decoder.input_dims):
            raise SpecError(f"encoder output {encoder.output_dims} != decoder input {decoder.input_dims}")
        if tuple(decoder.output_dims) != tuple(encoder.input_dims):
            raise SpecError("decoder must reproduce the encoder input dims")
        self.encoder = encoder
        self.decoder = decoder
        self.params = params

    @classmethod
    def build(cls, rng: SeededRng, in_channels: int = 1, size: int = 28, latent_channels: int = 8) -> "AutoencoderModel":
        enc = encoder_spec(in_channels, size, latent_channels)
        dec = decoder_spec(in_channels, size, latent_channels)
        params = init_params(enc, rng, prefix="encoder.")
        for name, p in init_params(dec, rng, prefix="decoder.").items():
            params.add(name, p.value.data)
        return cls(enc, dec, params)

    @property
    def input_dims(self):
        return self.encoder.input_dims

    @property
    def latent_dims(self):
        return self.encoder.output_dims

    def frozen(self) -> "AutoencoderModel":
        return type(self)(self.encoder, self.decoder, self.params.frozen())

    def encode_tensor(self, x) -> Tensor:
        return forward(self.encoder, self.params.prefixed("encoder."), x)

    def decode_tensor(self, z) -> Tensor:
        return forward(self.decoder, self.params.prefixed("decoder."), z)

    def save(self, path: Union[str, os.PathLike], meta: Optional[dict] = None) -> None:
        save_checkpoint(self.params, {"encoder": self.encoder, "decoder": self.decoder}, path, meta=meta)

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "AutoencoderModel":
        ckpt = read_checkpoint(path)
        if isinstance(ckpt.spec, NetworkSpec) or set(ckpt.spec) != {"encoder", "decoder"}:
            raise SpecError(f"{path} does not hold an encoder/decoder pair")
        model = cls(ckpt.spec["encoder"], ckpt.spec["decoder"], ckpt.params)
        model.meta = ckpt.meta
        return model


@dataclass
class LatentCode:
    """Autoencoder bottleneck value carrying its source label through every edit."""

    value: np.ndarray
    provenance: str = "encoded"
    source_index: Optional[int] = None
    label: Optional[int] = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        self.value = np.asarray(self.value, dtype=np.float32)

    def evolve(self, value: np.ndarray, provenance: str) -> "LatentCode":
        return replace(self, value=np.asarray(value, dtype=np.float32), provenance=provenance)


def _check_dims(x: Tensor, dims, what: str) -> None:
    if tuple(x.dims) != tuple(dims) and tuple(x.dims[1:]) != tuple(dims):
        raise ShapeError(f"{what}: dims {x.dims} do not match {tuple(dims)}")


def encode(ae: AutoencoderModel, x, source_index: Optional[int] = None, label: Optional[int] = None) -> LatentCode:
    x = as_tensor(x)
    if tuple(x.dims) != tuple(ae.input_dims):
        raise ShapeError(f"encode: dims {x.dims} do not match {ae.input_dims}")
    return LatentCode(ae.encode_tensor(x).data, "encoded", source_index, label)


def encode_batch(ae: AutoencoderModel, x) -> np.ndarray:
    x = as_tensor(x)
    _check_dims(x, ae.input_dims, "encode")
    return ae.encode_tensor(x).data


def decode(ae: AutoencoderModel, z) -> Tensor:
    """Decoded image(s) in (0, 1); differentiable with respect to ``z``."""
    if isinstance(z, LatentCode):
        z = z.value
    z = as_tensor(z)
    _check_dims(z, ae.latent_dims, "decode")
    return ae.decode_tensor(z)


def classify_logits(clf: ClassifierModel, x, mask=None) -> Tensor:
    x = as_tensor(x)
    _check_dims(x, clf.input_dims, "classify")
    return clf.logits(x, mask)


def reconstruction_loss(ae: AutoencoderModel, x) -> Tensor:
    x = as_tensor(x)
    diff = sub(decode(ae, ae.encode_tensor(x)), x)
    return mean(mul(diff, diff))


def train_autoencoder(
    ae: AutoencoderModel,
    images: np.ndarray,
    epochs: int,
    rng: SeededRng,
    batch_size: int = 64,
    lr: float = 1e-3,
) -> List[float]:
    """Minimize per-pixel MSE with Adam; returns the mean loss of every epoch."""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or len(images) == 0:
        raise DataError("autoencoder training needs a non-empty N x C x H x W image array")
    opt = Adam(lr)
    curve = []
    for epoch in range(epochs):
        order = rng.child("ae-shuffle", epoch).permutation(len(images))
        total, count = 0.0, 0
        for start in range(0, len(images), batch_size):
            batch = images[order[start : start + batch_size]]
            loss = reconstruction_loss(ae, batch)
            backward(loss)
            opt.step(ae.params)
            total += float(loss.data) * len(batch)
            count += len(batch)
        curve.append(total / count)
    return curve
