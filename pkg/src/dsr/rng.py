"""Seeded randomness for the whole pipeline.

Every random draw in this package flows through :class:`Rng`, a
counter-based SplitMix64 generator (Steele et al.'s mix function).  The
i-th output is a pure function of (seed, i), so streams are reproducible
from a 64-bit seed in any language, can be split without correlation,
and vectorize over counters with numpy uint64 arithmetic.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix(x: int) -> int:
    """SplitMix64 finalizer on a Python int (masked to 64 bits)."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * _M1) & _MASK
    x = ((x ^ (x >> 27)) * _M2) & _MASK
    return x ^ (x >> 31)


def _mix_array(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * np.uint64(_M1)
    x = x ^ (x >> np.uint64(27))
    x = x * np.uint64(_M2)
    return x ^ (x >> np.uint64(31))


def _fnv1a(tag: str) -> int:
    h = _FNV_OFFSET
    for b in tag.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h


class Rng:
    """Counter-based SplitMix64 stream.

    Output i is mix(seed + (i+1)*GAMMA).  `derive` folds a string tag
    (FNV-1a hashed) and an optional index into the seed to produce an
    independent child stream; the parent's counter is unaffected.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self._counter = 0

    def derive(self, tag: str, index: int = 0) -> "Rng":
        child = _mix(self.seed ^ _fnv1a(tag)) ^ _mix((index + 1) * _GAMMA)
        return Rng(child)

    def u64(self, n: int) -> np.ndarray:
        """Next n raw 64-bit outputs as a uint64 array."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return _mix_array(np.uint64(self.seed) + np.uint64(_GAMMA) * idx)

    def uniform(self, n: int | None = None) -> np.ndarray | float:
        """Floats in [0, 1) with 53-bit resolution."""
        if n is None:
            return float(self.u64(1)[0] >> np.uint64(11)) * 2.0**-53
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform_range(self, lo: float, hi: float, n: int | None = None):
        return lo + (hi - lo) * self.uniform(n)

    def integers(self, n_values: int, size: int | None = None):
        """Uniform ints in [0, n_values) by 128-bit multiply-shift."""
        if size is None:
            return int(self.u64(1)[0] % np.uint64(n_values))
        return (self.u64(size) % np.uint64(n_values)).astype(np.int64)

    def choice_weighted(self, cdf: np.ndarray) -> int:
        """Index drawn from the distribution whose inclusive CDF is given."""
        u = self.uniform()
        return int(np.searchsorted(cdf, u, side="right"))

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, top-down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integers(i + 1)
            items[i], items[j] = items[j], items[i]

    def normal(self, size: int) -> np.ndarray:
        """Standard normals via Box-Muller (even internal draw count)."""
        m = (size + 1) // 2
        u1 = np.maximum(self.uniform(m), 2.0**-53)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return out[:size]
