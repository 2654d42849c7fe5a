"""
Seeded xorshift64* random number generator.

Algorithm (reproducible in any language with 64-bit unsigned arithmetic):

    state = splitmix64(seed)            # never zero
    next:  x ^= x >> 12; x ^= x << 25; x ^= x >> 27
           return (x * 0x2545F4914F6CDD1D) mod 2**64

Floats in [0, 1) take the top 53 bits. Normals use Box-Muller with the cosine
branch only (one normal per two uniforms), so every draw consumes a fixed
number of steps.
"""

import math
from typing import Sequence, Tuple, Union

import numpy as np

MASK64 = (1 << 64) - 1
_MULTIPLIER = 0x2545F4914F6CDD1D

Shape = Union[int, Sequence[int], Tuple[int, ...]]


def splitmix64(value: int) -> int:
    """One splitmix64 round, used to scramble user seeds."""
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShiftRNG:
    """xorshift64* stream with numpy-shaped helpers."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        state = splitmix64(self.seed & MASK64)
        self._state = state if state != 0 else 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self._state = x
        return (x * _MULTIPLIER) & MASK64

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def spawn(self, stream: int) -> "XorShiftRNG":
        """Independent child stream derived from this generator's seed."""
        return XorShiftRNG(splitmix64((self.seed * 1_000_003 + stream) & MASK64))

    def integer(self, low: int, high: int) -> int:
        """Uniform integer in [low, high)."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        return low + int(self.random() * (high - low))

    def uniform(self, low: float = 0.0, high: float = 1.0, size: Shape = ()) -> np.ndarray:
        count = int(np.prod(size)) if size != () else 1
        values = np.fromiter((self.random() for _ in range(count)), dtype=np.float64, count=count)
        return (low + (high - low) * values).reshape(size)

    def normal(self, size: Shape = (), loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        count = int(np.prod(size)) if size != () else 1
        out = np.empty(count, dtype=np.float64)
        for index in range(count):
            u1 = self.random()
            u2 = self.random()
            radius = math.sqrt(-2.0 * math.log(1.0 - u1))
            out[index] = radius * math.cos(2.0 * math.pi * u2)
        return (loc + scale * out).reshape(size)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n)."""
        order = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integer(0, i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        if k > n:
            raise ValueError(f"cannot draw {k} distinct items from {n}")
        return self.permutation(n)[:k]

    def torch_seed(self) -> int:
        """Seed for torch generators (63-bit, positive)."""
        return self.next_u64() >> 1
