"""Portable seeded random stream: splitmix64 seeding feeding xoshiro256**.

Every draw is produced from 64-bit integer arithmetic, so a given seed yields
the same sequence on any platform. Independent sub-streams are derived from
the parent *seed* (never from its current state):

    child_seed = splitmix64(parent_seed XOR label)

applied once per label, so ``rng.child("noise", epoch, batch)`` folds three
labels in order. String labels are hashed to 64 bits with FNV-1a.
"""

from __future__ import annotations

import math
from typing import Sequence, Union

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

Label = Union[int, str]


def splitmix64(x: int) -> int:
    """First output of a splitmix64 generator whose state is ``x``."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def label_to_u64(label: Label) -> int:
    if isinstance(label, (bool, np.bool_)):
        label = int(label)
    if isinstance(label, (int, np.integer)):
        return int(label) & MASK64
    if isinstance(label, str):
        h = _FNV_OFFSET
        for byte in label.encode("utf-8"):
            h = ((h ^ byte) * _FNV_PRIME) & MASK64
        return h
    raise TypeError(f"stream label must be int or str, got {type(label).__name__}")


class SeededRng:
    """xoshiro256** generator with labelled, reproducible sub-streams."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        x = self.seed
        state = []
        for _ in range(4):
            x = (x + _GOLDEN) & MASK64
            z = x
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
            state.append(z ^ (z >> 31))
        if not any(state):
            state[0] = 1
        self._s = state

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed:#018x})"

    def child(self, *labels: Label) -> "SeededRng":
        seed = self.seed
        for label in labels:
            seed = splitmix64(seed ^ label_to_u64(label))
        return SeededRng(seed)

    # -- raw output -------------------------------------------------------

    def next_u64(self) -> int:
        return int(self._fill(1)[0])

    def _fill(self, n: int) -> list:
        s0, s1, s2, s3 = self._s
        m = MASK64
        out = [0] * n
        for i in range(n):
            r = (s1 * 5) & m
            out[i] = ((((r << 7) | (r >> 57)) & m) * 9) & m
            t = (s1 << 17) & m
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & m
        self._s = [s0, s1, s2, s3]
        return out

    def uint64(self, n: int) -> np.ndarray:
        return np.array(self._fill(int(n)), dtype=np.uint64)

    # -- derived distributions -------------------------------------------

    def random(self, n: int) -> np.ndarray:
        """``n`` uniform float64 draws in [0, 1) from the top 53 bits."""
        return (self.uint64(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)

    def uniform(self, low: float, high: float, dims: Sequence[int]) -> np.ndarray:
        dims = tuple(int(d) for d in dims)
        u = self.random(math.prod(dims))
        return (low + (high - low) * u).reshape(dims)

    def normal(self, dims: Sequence[int]) -> np.ndarray:
        """Standard normal float64 draws via Box-Muller (both outputs used)."""
        dims = tuple(int(d) for d in dims)
        n = math.prod(dims)
        pairs = (n + 1) // 2
        u = self.random(2 * pairs)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * pairs, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n].reshape(dims)

    def bernoulli(self, keep: float, dims: Sequence[int]) -> np.ndarray:
        dims = tuple(int(d) for d in dims)
        return (self.random(math.prod(dims)) < keep).reshape(dims)

    def integers(self, bound: int) -> int:
        """Unbiased integer in [0, bound) by rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % bound

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integers(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return np.array(idx, dtype=np.int64)
