"""Counter-based splitmix64 random streams.

Every component draws from its own named stream, derived from the global
seed and the component name, so results never depend on the order in which
components (or parallel trials) consume randomness.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """Scalar splitmix64 finalizer applied to ``x + golden``."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, name: str) -> int:
    """Key for the stream ``name`` under global ``seed``.

    key = splitmix64(splitmix64(seed) XOR first 8 bytes of sha256(name)).
    """
    digest = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return splitmix64(splitmix64(seed & _MASK) ^ digest)


class Stream:
    """Counter-based generator: the i-th draw is mix(key + (i + 1) * golden)."""

    def __init__(self, key: int):
        self.key = key & _MASK
        self.counter = 0

    @classmethod
    def named(cls, seed: int, name: str) -> "Stream":
        return cls(stream_key(seed, name))

    def child(self, name: str) -> "Stream":
        return Stream(stream_key(self.key, name))

    def bits(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.key) + idx * np.uint64(_GOLDEN)
            return _mix(z)

    def random(self, shape=()) -> np.ndarray:
        """Uniform doubles in [0, 1)."""
        n = int(np.prod(shape, dtype=np.int64)) if shape != () else 1
        u = (self.bits(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape) if shape != () else u[0]

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return low + (high - low) * self.random(shape)

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws by Box-Muller."""
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        b = self.bits(2 * m) >> np.uint64(11)
        u1 = (b[:m].astype(np.float64) + 1.0) * 2.0**-53  # (0, 1]
        u2 = b[m:].astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n].reshape(shape)

    def integers(self, high: int, shape) -> np.ndarray:
        return np.minimum((self.random(shape) * high).astype(np.int64), high - 1)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.random((n,)), kind="stable")


class SeedStreams:
    """Factory of named per-component streams for one global seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def __call__(self, name: str) -> Stream:
        return Stream.named(self.seed, name)
