"""Portable seeded random numbers.

All stochastic choices in twinforge (signal synthesis, weight initialization,
test-set search) draw from :class:`Xoshiro256`, a xoshiro256** generator
seeded through splitmix64. The sequence is fully specified by integer
arithmetic, so any implementation of the same recipe reproduces the same
signals bit for bit:

* ``seed`` -> four state words via splitmix64 (state starts at ``seed``).
* ``next_u64`` is the reference xoshiro256** step.
* ``random()`` returns ``(next_u64() >> 11) * 2**-53`` in [0, 1).
* ``randbelow(n)`` returns ``((next_u64() >> 11) * n) >> 53``.
* ``derive_seed(base, *labels)`` hashes ``"base:label1:label2..."`` with
  SHA-256 and keeps the first 8 bytes (big endian).
"""

from __future__ import annotations

import hashlib

_MASK = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def derive_seed(base: int, *labels) -> int:
    text = ":".join([str(int(base))] + [str(label) for label in labels])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


class Xoshiro256:
    """xoshiro256** with splitmix64 seeding."""

    def __init__(self, seed: int):
        sm = int(seed) & _MASK
        words = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            words.append(out)
        if not any(words):
            words[0] = 1
        self._s = words

    @classmethod
    def from_state(cls, words) -> "Xoshiro256":
        """Generator with an explicit four-word state (for reference vectors)."""
        words = [int(w) & _MASK for w in words]
        if len(words) != 4 or not any(words):
            raise ValueError("state must be four words, not all zero")
        gen = cls.__new__(cls)
        gen._s = words
        return gen

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        return ((self.next_u64() >> 11) * n) >> 53

    def permutation(self, items):
        """Fisher-Yates shuffle of a copy of ``items``."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.randbelow(i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def sample(self, items, k: int):
        """k distinct items, in draw order (partial Fisher-Yates)."""
        pool = list(items)
        if k > len(pool):
            raise ValueError("sample larger than population")
        for i in range(k):
            j = i + self.randbelow(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
