"""Deterministic, language-independent question sampling.

The generator and the partial shuffle are pinned bitwise so the same seed
selects the same questions in any implementation: a splitmix64 stream feeds
a partial Fisher-Yates shuffle, and the first `size` indexes are the sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TypeVar

from ..errors import SampleTooLarge

T = TypeVar("T")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """64-bit splitmix generator; state advances by the golden-ratio constant."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)


@dataclass(frozen=True)
class SamplePlan:
    size: int
    seed: int


def sample_indexes(n: int, size: int, seed: int) -> list[int]:
    """First `size` positions of a seeded partial Fisher-Yates over [0, n)."""
    if size > n:
        raise SampleTooLarge(size, n)
    rng = SplitMix64(seed)
    indexes = list(range(n))
    for i in range(size):
        j = rng.next_u64() % (n - i) + i
        indexes[i], indexes[j] = indexes[j], indexes[i]
    return indexes[:size]


def sample(records: Sequence[T], plan: SamplePlan) -> list[T]:
    return [records[i] for i in sample_indexes(len(records), plan.size, plan.seed)]
