"""Counter-based splitmix64 generator shared by the numba and numpy kernels.

A stream is identified by a 64-bit key; draw number ``c`` (starting at 1) is
``mix64(key + c * GOLDEN)``. Because every draw is a pure function of
``(key, c)``, the compiled kernels, the numpy fallback and vectorised bulk
draws all produce identical sequences.
"""
import zlib

import numpy as np

from ._accel import njit

GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

_U_GOLDEN = np.uint64(GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


def mix64(z):
    z &= _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


class CounterRNG:
    """Scalar generator for the pure-Python/numpy code paths."""

    __slots__ = ("key", "counter")

    def __init__(self, key, counter=0):
        self.key = int(key) & _MASK
        self.counter = int(counter)

    def next_u64(self):
        self.counter += 1
        return mix64(self.key + self.counter * GOLDEN)

    def uniform(self):
        return (self.next_u64() >> 11) * _INV53

    def randint(self, n):
        """Integer in ``[0, n)``."""
        return int(self.uniform() * n)


@njit(cache=True)
def nb_next_u64(key, state):
    state[0] += np.uint64(1)
    z = key + state[0] * _U_GOLDEN
    z = (z ^ (z >> _S30)) * _U_M1
    z = (z ^ (z >> _S27)) * _U_M2
    return z ^ (z >> _S31)


@njit(cache=True)
def nb_uniform(key, state):
    return float(nb_next_u64(key, state) >> _S11) * _INV53


@njit(cache=True)
def nb_randint(key, state, n):
    return np.int64(nb_uniform(key, state) * n)


def bulk_uniform(key, start, count):
    """Draws ``start+1 .. start+count`` of stream ``key`` as a float array."""
    c = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + c * _U_GOLDEN
        z = (z ^ (z >> _S30)) * _U_M1
        z = (z ^ (z >> _S27)) * _U_M2
        z = z ^ (z >> _S31)
    return (z >> _S11).astype(np.float64) * _INV53


def stream_key(seed, name, *indices):
    """64-bit key for the named substream ``name`` of a top-level ``seed``."""
    entropy = [int(seed) & _MASK, zlib.crc32(name.encode())]
    entropy.extend(int(i) for i in indices)
    words = np.random.SeedSequence(entropy).generate_state(2, np.uint32)
    return (int(words[0]) << 32) | int(words[1])
