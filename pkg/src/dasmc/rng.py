"""Counter-based RNG substreams.

Every random draw in a run comes from a Philox generator keyed by the
master seed plus a purpose tag and integer indices (iteration, particle).
Streams are therefore independent of execution order and thread count:
the same (seed, tag, indices) always yields the same stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_value(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2s(str(tag).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *tags) -> np.random.Generator:
    """Generator for the stream identified by (seed, *tags)."""
    entropy = (int(seed),) + tuple(_tag_value(t) for t in tags)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def particle_streams(seed: int, tag, iteration: int, n: int) -> list:
    """One generator per particle index, keyed (seed, tag, iteration, i)."""
    return [substream(seed, tag, iteration, i) for i in range(n)]
