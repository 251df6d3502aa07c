"""Reproducible dataset generation and sample breaking.

Random streams come from numpy's Philox4x64 counter-based generator.  The
128-bit Philox key for replicate ``r`` is a pure function of the master seed,
``r`` and optional integer tags (e.g. the ``(M, N)`` cell), mixed with the
SplitMix64 finaliser.  Streams therefore do not depend on the order in which
replicates are run or on how many workers run them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, DensityModel
from .errors import InvalidSize

__all__ = ["SeedSpec", "mix64", "replicate_stream", "generate_dataset",
           "break_batches", "simulate_broken"]

_MASK = (1 << 64) - 1
# SplitMix64 increment (golden ratio) and finaliser multipliers
_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finaliser: a bijective avalanche mix on 64-bit integers."""
    z = (z + _GAMMA) & _MASK
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK
    return z ^ (z >> 31)


def _key(master_seed: int, replicate: int, tags) -> int:
    hi = mix64(master_seed & _MASK)
    lo = mix64(replicate & _MASK)
    for t in tags:
        lo = mix64(lo ^ (int(t) & _MASK))
    return (hi << 64) | lo


def replicate_stream(master_seed: int, replicate: int, *tags: int) -> np.random.Generator:
    if not 0 <= master_seed <= _MASK:
        raise ValueError("master seed must be an unsigned 64-bit integer")
    if replicate < 0:
        raise ValueError("replicate index must be non-negative")
    return np.random.Generator(np.random.Philox(key=_key(master_seed, replicate, tags)))


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= _MASK:
            raise ValueError("master seed must be an unsigned 64-bit integer")

    def stream(self, replicate: int, *tags: int) -> np.random.Generator:
        return replicate_stream(int(self.master_seed), replicate, *tags)


def generate_dataset(model: DensityModel, M: int, N: int,
                     stream: np.random.Generator) -> Dataset:
    """``N`` batches of ``M`` i.i.d. pairs from the model's true joint law.

    The pairing is still intact (``xs[k, i]`` and ``ys[k, i]`` were drawn
    together); see :func:`break_batches`.
    """
    if M < 1 or N < 1:
        raise InvalidSize(f"need M >= 1 and N >= 1, got M={M}, N={N}")
    xs, ys = model.sample_pairs(stream, M * N)
    return Dataset.from_arrays(xs.reshape(N, M, -1), ys.reshape(N, M, -1))


def _fisher_yates(M: int, stream: np.random.Generator) -> list:
    perm = list(range(M))
    if M < 2:
        return perm
    # j_i uniform on {0..i} for i = M-1 .. 1
    picks = stream.integers(0, np.arange(M, 1, -1))
    for i, j in zip(range(M - 1, 0, -1), picks.tolist()):
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def break_batches(dataset: Dataset, stream: np.random.Generator) -> Dataset:
    """Shuffle each batch's ``ys`` by an independent uniform permutation."""
    ys = dataset.ys
    shuffled = np.empty_like(ys)
    for k in range(dataset.N):
        shuffled[k] = ys[k][_fisher_yates(dataset.M, stream)]
    return Dataset.from_arrays(dataset.xs, shuffled)


def simulate_broken(model: DensityModel, M: int, N: int,
                    stream: np.random.Generator) -> Dataset:
    return break_batches(generate_dataset(model, M, N, stream), stream)
