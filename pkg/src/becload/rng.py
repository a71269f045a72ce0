"""Deterministic random streams keyed by (seed, replica, purpose).

Every trajectory derives its own independent stream from the triple, so
ensembles give identical results whether replicas run sequentially or in
parallel. The reference engine uses a counter-based Philox generator keyed
directly by the triple; the compiled engine uses a xoshiro256+ state expanded
from the same triple with splitmix64.
"""

import numpy as np

_M64 = (1 << 64) - 1


def philox_stream(seed, replica=0, purpose=0):
    """numpy Generator with a Philox key derived from (seed, replica, purpose)."""
    if replica < 0 or purpose < 0:
        raise ValueError("replica and purpose must be non-negative")
    key = np.array([seed & _M64,
                    ((replica & 0xFFFFFFFFFFFF) << 16) | (purpose & 0xFFFF)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _splitmix_next(x):
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    z = z ^ (z >> 31)
    return x, z


def xoshiro_state(seed, replica=0, purpose=0):
    """Expand (seed, replica, purpose) into a xoshiro256 state vector.

    Returns a uint64[4] array, never all zero. The compiled kernel advances
    this state in place.
    """
    if replica < 0 or purpose < 0:
        raise ValueError("replica and purpose must be non-negative")
    x = seed & _M64
    x, mixed = _splitmix_next(x)
    x = mixed ^ ((replica & _M64) * 0x9E3779B97F4A7C15 & _M64)
    x, mixed = _splitmix_next(x)
    x = mixed ^ ((purpose & _M64) * 0xBF58476D1CE4E5B9 & _M64)
    words = []
    for _ in range(4):
        x, z = _splitmix_next(x)
        words.append(z)
    if not any(words):
        words[0] = 1
    return np.array(words, dtype=np.uint64)
