"""Deterministic random streams.

Two kinds of randomness are used in the simulator:

* ``keyed_uniform`` is a counter-based generator: the value for index ``i``
  depends only on ``(seed, stream, i)``, so noise phases for a frequency bin
  are the same whatever the grid extent or evaluation order.
* ``generator`` returns a :class:`numpy.random.Generator` whose state is a
  pure function of a tuple of integers (campaign seed, point index, ...).
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


def _key(*words: int) -> np.uint64:
    entropy = [int(w) & 0xFFFFFFFFFFFFFFFF for w in words]
    return np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]


def keyed_uniform(indices, *key: int) -> np.ndarray:
    """Uniform deviates in [0, 1) addressed by integer index.

    Parameters
    ----------
    indices : array_like of int
        Counter values (e.g. absolute frequency-bin numbers). Must be >= 0.
    *key : int
        Integers identifying the stream, typically ``(seed, realization)``.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if np.any(idx < 0):
        raise ValueError("counter indices must be non-negative")
    k = _key(*key)
    with np.errstate(over="ignore"):
        x = _splitmix64(idx.astype(np.uint64) * _GOLDEN ^ k)
        x = _splitmix64(x ^ k)
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def generator(*key: int) -> np.random.Generator:
    """Independent PCG64 generator keyed on a tuple of integers."""
    entropy = [int(w) & 0xFFFFFFFFFFFFFFFF for w in key]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
