"""Deterministic seeded random number generation.

The generator is a fixed xoshiro256** stream (Blackman & Vigna) seeded
through the splitmix64 expansion, with uniforms taken as the top 53 bits
and Gaussians produced by Box-Muller. All constants are pinned below, so a
stored seed regenerates the identical stream on any platform: the integer
stream and uniforms are exact, and the Gaussian path uses only libm calls
whose rounding agrees on mainstream libms.
"""

import hashlib

import numpy as np

from .backend import kernels

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15  # splitmix64 increment


def _finalize(z):
    # splitmix64 output function (Steele, Lea & Flood constants).
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _encode_component(p):
    if isinstance(p, str):
        return int.from_bytes(hashlib.sha256(p.encode("utf-8")).digest()[:8], "little")
    return int(p) & _MASK


def derive_seed(master, *path):
    """Derive a child seed from a master seed and a label path.

    The fold is order-sensitive: each component is scrambled and mixed into
    the running value with a splitmix64 finalizer, so distinct paths give
    independent-looking seeds while staying fully documented and portable.
    """
    z = int(master) & _MASK
    for p in path:
        z = _finalize(((z + _GOLDEN) & _MASK) ^ _finalize(_encode_component(p) + _GOLDEN))
    return z


class SeededRng:
    """Single-owner deterministic RNG; not safe to share across threads."""

    __slots__ = ("seed", "_state")

    def __init__(self, seed):
        self.seed = int(seed) & _MASK
        state = np.zeros(6, dtype=np.uint64)
        z = self.seed
        for i in range(4):
            z = (z + _GOLDEN) & _MASK
            state[i] = _finalize(z)
        self._state = state

    def __repr__(self):
        return f"SeededRng(seed={self.seed})"

    def spawn(self, *path):
        """Child generator seeded by (original seed, path); independent of
        how much of this stream has been consumed."""
        return SeededRng(derive_seed(self.seed, *path))

    def next_u64(self):
        out = np.empty(1, dtype=np.uint64)
        kernels.fill_u64(self._state, out)
        return int(out[0])

    def raw(self, size):
        """Raw 64-bit draws as a uint64 array."""
        out = np.empty(int(np.prod(size)) if not np.isscalar(size) else size,
                       dtype=np.uint64)
        kernels.fill_u64(self._state, out)
        return out.reshape(size)

    def uniform(self, size=None):
        """Uniform draws in [0, 1); scalar when size is None."""
        if size is None:
            out = np.empty(1)
            kernels.fill_uniform(self._state, out)
            return float(out[0])
        out = np.empty(size)
        kernels.fill_uniform(self._state, out.ravel())
        return out

    def normal(self, size=None):
        """Standard normal draws (Box-Muller); scalar when size is None."""
        if size is None:
            out = np.empty(1)
            kernels.fill_normal(self._state, out)
            return float(out[0])
        out = np.empty(size)
        kernels.fill_normal(self._state, out.ravel())
        return out

    def integers(self, upper, size=None):
        """Integer draws in [0, upper) via modulo of the raw stream."""
        if upper <= 0:
            raise ValueError("upper bound must be positive")
        if size is None:
            return int(self.next_u64() % upper)
        raw = self.raw(size)
        return (raw % np.uint64(upper)).astype(np.int64)

    def state_words(self):
        """Copy of the internal state, for determinism checks."""
        return tuple(int(w) for w in self._state)
