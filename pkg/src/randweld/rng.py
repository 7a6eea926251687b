"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by a
root seed plus a tuple of named or integer sub-keys, e.g.
``stream(seed, "fourier", replicate)``.  Streams with different keys are
statistically independent and do not depend on evaluation order.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    k = int(key)
    if k < 0:
        raise ValueError(f"stream keys must be non-negative, got {k}")
    return k


def seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(_key_to_int(k) for k in keys))


def stream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *keys)))
