"""Deterministic counter-based random numbers.

Every stochastic choice in the package (synthetic data, splits, weight
init, batch shuffling, power-iteration start vectors) flows through
:class:`CounterRng` so that runs are reproducible from a single integer
seed and the generated streams are reproducible in other languages.

The generator is the SplitMix64 output function applied to a counter:

    raw(k) = mix64(state + (k + 1) * 0x9E3779B97F4A7C15)   (mod 2**64)

where ``state`` is derived from ``(seed, stream)`` as documented in
``__init__``.  Uniform doubles take the top 53 bits; normals use the
Box-Muller cosine branch with exactly two uniforms per normal;
permutations sort a block of uniforms (stable argsort).  All of these
choices are part of the format contract: changing them invalidates
golden files.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_TWO53 = float(1 << 53)


def _mix64(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer; uint64 arithmetic wraps mod 2**64.
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX_A
        z = (z ^ (z >> np.uint64(27))) * _MIX_B
        return z ^ (z >> np.uint64(31))


class CounterRng:
    """Counter-based generator with independent, addressable streams."""

    def __init__(self, seed: int, stream: int = 0):
        with np.errstate(over="ignore"):
            base = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _GOLDEN)
            salted = base ^ (np.uint64(stream & 0xFFFFFFFFFFFFFFFF) * _MIX_A)
        self._state = np.uint64(_mix64(salted))
        self._counter = 0

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        ks = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix64(self._state + ks * _GOLDEN)

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1) with 53-bit resolution."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) / _TWO53

    def normals(self, n: int) -> np.ndarray:
        """``n`` standard normals; each consumes two uniforms (Box-Muller)."""
        u = self.uniforms(2 * n)
        u1, u2 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)

    def permutation(self, n: int) -> np.ndarray:
        """Permutation of range(n): stable argsort of n uniforms."""
        return np.argsort(self.uniforms(n), kind="stable")

    def uniform_matrix(self, rows: int, cols: int, low: float, high: float) -> np.ndarray:
        return low + (high - low) * self.uniforms(rows * cols).reshape(rows, cols)
