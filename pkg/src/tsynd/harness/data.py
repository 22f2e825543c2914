"""Datasets, stratified subsampling and the synthetic "shapes" task."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..diffcore import SeededRng
from ..errors import DataError

SPLITS = ("train", "val", "test")
SHAPE_CLASSES = ("square", "circle", "cross", "stripes")


@dataclass
class Dataset:
    images: np.ndarray  # N x C x H x W in [0, 1]
    labels: np.ndarray  # N class indices
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise DataError(f"images must be N x C x H x W, got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) == 0:
            raise DataError("dataset is empty")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        if self.split not in SPLITS:
            raise DataError(f"unknown split {self.split!r}")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_dims(self):
        return self.images.shape[1:]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def take(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.num_classes, self.split)


def subsample(d: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep ``ceil(fraction * N_c)`` samples of every class ``c``, original order preserved."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    rng = SeededRng(seed).child("subsample")
    keep = []
    for c in range(d.num_classes):
        members = np.flatnonzero(d.labels == c)
        if len(members) == 0:
            raise DataError(f"class {c} has no samples to draw from")
        k = math.ceil(round(fraction * len(members), 9))
        order = rng.child(c).permutation(len(members))
        keep.append(members[order[:k]])
    return d.take(np.sort(np.concatenate(keep)))


def _render(kind: int, rng: SeededRng, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx, cy = rng.uniform(size / 2 - 4, size / 2 + 4, (2,))
    extent = rng.uniform(5.0, 8.5, (1,))[0]
    dx, dy = xx - cx, yy - cy
    if kind == 0:
        mask = (np.abs(dx) <= extent) & (np.abs(dy) <= extent)
    elif kind == 1:
        mask = np.abs(np.hypot(dx, dy) - extent) <= 1.3
    elif kind == 2:
        mask = ((np.abs(dx) <= 1.2) & (np.abs(dy) <= extent)) | ((np.abs(dy) <= 1.2) & (np.abs(dx) <= extent))
    else:
        box = (np.abs(dx) <= extent) & (np.abs(dy) <= extent)
        mask = box & (np.floor((dy + extent) / 2.0) % 2 == 0)
    intensity = rng.uniform(0.7, 1.0, (1,))[0]
    return mask.astype(np.float64) * intensity


def make_shapes(n: int, seed: int, split: str = "train", size: int = 28, noise: float = 0.1) -> Dataset:
    """``n`` 1 x size x size images of four shape classes with jitter and pixel noise.

    Labels cycle through the classes so every class is balanced; each image has
    its own stream so any prefix of a larger set is reproducible.
    """
    if n < 1:
        raise DataError("need at least one image")
    root = SeededRng(seed).child("shapes", split)
    images = np.empty((n, 1, size, size), dtype=np.float32)
    labels = np.arange(n) % len(SHAPE_CLASSES)
    for i in range(n):
        stream = root.child(i)
        img = _render(int(labels[i]), stream, size)
        img = img + noise * stream.normal((size, size))
        images[i, 0] = np.clip(img, 0.0, 1.0)
    return Dataset(images, labels, len(SHAPE_CLASSES), split)


def make_quadrant_task(n: int, seed: int, size: int = 28, split: str = "train") -> Dataset:
    """Two classes that differ only by a bright blob in the top-left quadrant.

    Both classes share a distractor bar in the bottom half, so any class
    evidence a model uses has to come from the top-left quadrant.
    """
    root = SeededRng(seed).child("quadrant", split)
    images = np.empty((n, 1, size, size), dtype=np.float32)
    labels = np.arange(n) % 2
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    half = size // 2
    for i in range(n):
        stream = root.child(i)
        img = 0.05 * stream.normal((size, size))
        row = stream.uniform(half + 3, size - 4, (1,))[0]
        col = stream.uniform(4, size - 12, (1,))[0]
        img += 0.6 * ((np.abs(yy - row) <= 1.0) & (xx >= col) & (xx <= col + 8))
        if labels[i] == 1:
            bx, by = stream.uniform(4, half - 4, (2,))
            img += 0.9 * (np.hypot(xx - bx, yy - by) <= 3.5)
        images[i, 0] = np.clip(img, 0.0, 1.0)
    return Dataset(images, labels, 2, split)
