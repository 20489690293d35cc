"""Deterministic counter-based random number generator.

Golden traces and CSV outputs must be reproducible bit-for-bit across
platforms and across re-implementations, so the generator is defined here in
full rather than delegated to a platform RNG. The construction is a keyed
splitmix64 counter: block ``i`` of raw output is

    out_i = mix64(key + (i + 1) * PHI)            (all arithmetic mod 2**64)

with the finalizer

    mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
              z ^= z >> 27; z *= 0x94D049BB133111EB;
              z ^= z >> 31

and PHI = 0x9E3779B97F4A7C15. The key is derived from the user seed as
``key = mix64(mix64(seed ^ PHI) + stream * PHI2)`` with
PHI2 = 0xD1B54A32D192ED03. Derived quantities:

* ``uniform``: ``(out >> 11) * 2**-53`` in [0, 1).
* ``standard_normal``: Box-Muller on consecutive uniform pairs (u1, u2):
  ``r = sqrt(-2 log(1 - u1))``, ``z0 = r cos(2 pi u2)``, ``z1 = r sin(2 pi u2)``.
  A request for k values consumes ceil(k/2) pairs and discards the unused
  half of an odd tail, so consumption depends only on k.
* ``uniform_int(n)``: ``min(floor(uniform() * n), n - 1)``.
* ``spawn(label)``: independent child stream with
  ``key' = mix64(key ^ mix64((label + 1) * PHI2))`` and counter reset to 0.

Because output block ``i`` depends only on (key, i), any contiguous batch of
draws can be produced vectorized with results identical to one-at-a-time
generation.
"""

from __future__ import annotations

import numpy as np

_PHI = np.uint64(0x9E3779B97F4A7C15)
_PHI2 = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_U53 = float(2.0**-53)
_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _mix64(z: np.ndarray) -> np.ndarray:
    # operates on uint64 arrays; numpy array arithmetic wraps mod 2**64
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def _mix64_scalar(z: int) -> int:
    z &= 0xFFFFFFFFFFFFFFFF
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


class CounterRng:
    """Splitmix64 counter generator with a documented, portable layout."""

    def __init__(self, seed: int, stream: int = 0):
        key = _mix64_scalar((seed & 0xFFFFFFFFFFFFFFFF) ^ int(_PHI))
        key = _mix64_scalar(key + ((stream & 0xFFFFFFFFFFFFFFFF) * int(_PHI2)))
        self._key = np.uint64(key)
        self._counter = 0

    @classmethod
    def _from_key(cls, key: int) -> "CounterRng":
        rng = cls.__new__(cls)
        rng._key = np.uint64(key & 0xFFFFFFFFFFFFFFFF)
        rng._counter = 0
        return rng

    def spawn(self, label: int) -> "CounterRng":
        """Independent child stream; safe for parallel workers."""
        child = _mix64_scalar(int(self._key) ^ _mix64_scalar((label + 1) * int(_PHI2)))
        return CounterRng._from_key(child)

    @property
    def counter(self) -> int:
        """Number of raw 64-bit blocks consumed so far."""
        return self._counter

    def _blocks(self, k: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + k + 1, dtype=np.uint64)
        self._counter += k
        return _mix64((self._key + idx * _PHI) & _MASK)

    def uniform(self, size: int | tuple[int, ...] | None = None):
        """Uniform draws in [0, 1); scalar float when size is None."""
        if size is None:
            return float(self._blocks(1)[0] >> np.uint64(11)) * _U53
        shape = (size,) if isinstance(size, int) else tuple(size)
        k = int(np.prod(shape)) if shape else 1
        u = (self._blocks(k) >> np.uint64(11)).astype(np.float64) * _U53
        return u.reshape(shape)

    def standard_normal(self, size: int | tuple[int, ...] | None = None):
        """Standard normal draws via Box-Muller; scalar float when size is None."""
        shape = (1,) if size is None else ((size,) if isinstance(size, int) else tuple(size))
        k = int(np.prod(shape)) if shape else 1
        pairs = (k + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        theta = (2.0 * np.pi) * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        if size is None:
            return float(z[0])
        return z[:k].reshape(shape)

    def uniform_int(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return min(int(self.uniform() * n), n - 1)
