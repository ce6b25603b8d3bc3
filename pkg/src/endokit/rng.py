"""Deterministic 64-bit PRNG and stable string hashing.

Every seeded decision in the toolkit (split tiebreaks, fixture synthesis)
flows through this module so results are bit-identical across platforms
and Python versions. Python's built-in ``hash``/``random`` are avoided on
purpose: the former is salted per process, the latter is not guaranteed
stable across versions.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


def mix64(x: int) -> int:
    """One SplitMix64 finalization round of a 64-bit value."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def fnv1a64(data: str) -> int:
    """FNV-1a hash of a string's UTF-8 bytes; stable everywhere."""
    h = 0xCBF29CE484222325
    for byte in data.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def tiebreak(seed: int, key: str) -> int:
    """Seeded pseudo-random rank for *key*; used to break ordering ties."""
    return mix64((seed & _MASK64) ^ fnv1a64(key))


class SplitMix64:
    """SplitMix64 sequence generator."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        return mix64(self._state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (unbiased)."""
        if n <= 0:
            raise ValueError("randrange() requires n >= 1")
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            u = self.next_u64()
            if u <= limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]
