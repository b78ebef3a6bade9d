"""Splittable random streams and deterministic chunked reductions.

Every Monte Carlo estimate in the package is computed in fixed-size chunks.
Chunk ``i`` draws from its own substream derived from ``(seed, tag, i)``, so
the result does not depend on how many worker threads evaluate the chunks.
Partial results are merged in chunk order.
"""
from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

THREADS_ENV = "SIMPLEXLAB_THREADS"
DEFAULT_CHUNK = 65536

T = TypeVar("T")


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(value, 1)


def _tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def substream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, tag, index)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_tag_key(tag), int(index)))
    return np.random.default_rng(ss)


def chunk_sizes(total: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    if total <= 0:
        raise ValueError("sample count must be positive")
    full, rest = divmod(int(total), int(chunk))
    return [chunk] * full + ([rest] if rest else [])


def map_ordered(fn: Callable[[int], T], n_items: int, threads: int | None = None) -> list[T]:
    """Evaluate ``fn(0..n_items-1)``, returning results in index order."""
    threads = default_threads() if threads is None else max(int(threads), 1)
    if threads == 1 or n_items <= 1:
        return [fn(i) for i in range(n_items)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_items)))


@dataclass(frozen=True)
class Moments:
    """Streaming count/mean/M2 for one or more columns (Chan's merge)."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, samples: np.ndarray) -> "Moments":
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        mean = samples.mean(axis=0)
        m2 = ((samples - mean) ** 2).sum(axis=0)
        return cls(samples.shape[0], mean, m2)

    def merge(self, other: "Moments") -> "Moments":
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        return Moments(n, mean, m2)

    @staticmethod
    def combine(parts: Sequence["Moments"]) -> "Moments":
        out = parts[0]
        for part in parts[1:]:
            out = out.merge(part)
        return out

    @property
    def variance(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.mean)
        return self.m2 / (self.n - 1)

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(self.variance / self.n)
