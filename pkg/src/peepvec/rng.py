"""Deterministic seeded randomness.

Walk sampling, corpus synthesis and parameter init must reproduce
bit-for-bit across runs, platforms and Python versions.  The builtin
hash() is salted per process and random.Random's stream is an
implementation detail, so the package carries its own SplitMix64
generator plus a stable string hash for deriving named substreams.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a fixed 64-bit bijective scramble."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def stable_hash(*parts: int | str | bytes) -> int:
    """64-bit hash of a mixed int/str/bytes tuple, stable across processes.

    Used to derive per-function RNG seeds as stable_hash(seed, fn_name);
    collisions are harmless (streams merely coincide) but type confusion
    is not, so each part is tagged and length-prefixed.
    """
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        if isinstance(p, bool):  # bool is an int subclass; forbid silently odd keys
            raise TypeError("bool is not a valid hash part")
        if isinstance(p, int):
            h.update(b"i")
            h.update(p.to_bytes(17, "little", signed=True))
        elif isinstance(p, str):
            b = p.encode("utf-8")
            h.update(b"s")
            h.update(len(b).to_bytes(8, "little"))
            h.update(b)
        elif isinstance(p, bytes):
            h.update(b"b")
            h.update(len(p).to_bytes(8, "little"))
            h.update(p)
        else:
            raise TypeError(f"unhashable part type {type(p).__name__}")
    return int.from_bytes(h.digest(), "little")


class SplitMix64:
    """Tiny counter-based PRNG; every draw is mix64 of an advancing state."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next64(self) -> int:
        self._state = (self._state + _GOLDEN) & MASK64
        return mix64(self._state)

    def below(self, n: int) -> int:
        """Uniform int in [0, n).  Modulo bias is ~n/2**64, ignored."""
        if n <= 0:
            raise ValueError("below() needs n > 0")
        return self.next64() % n

    def choice(self, seq):
        return seq[self.below(len(seq))]

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next64() >> 11) * (2.0 ** -53)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform int in [lo, hi] inclusive."""
        return lo + self.below(hi - lo + 1)

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.below(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def fork(self, *label: int | str) -> "SplitMix64":
        """Child stream derived from current state and a label; advances self."""
        return SplitMix64(stable_hash(self.next64(), *label))


def derive(seed: int, *parts: int | str) -> SplitMix64:
    """Named substream: derive(seed, fn_name) is the per-function stream."""
    return SplitMix64(stable_hash(seed, *parts))
