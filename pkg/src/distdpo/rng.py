"""Named, splittable random streams.

Every stochastic routine takes an explicit ``numpy.random.Generator``.  Streams
are derived from a root seed plus a tuple of keys, so a stream for
``("local", round, client)`` is the same no matter which worker asks for it or
in what order.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be nonnegative, got {key}")
        return int(key)
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"unsupported stream key type: {type(key).__name__}")


def seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))


def stream(seed: int, *keys) -> np.random.Generator:
    """Generator for the substream ``keys`` under root ``seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit integer seed for a named child stream (for nesting roots)."""
    return int(seed_sequence(seed, *keys).generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> 1)
