"""Named, reproducible RNG streams derived from a single run seed."""

from __future__ import annotations

import zlib

import numpy as np

def rng_for(seed: int, *tags: object) -> np.random.Generator:
    """Derive an independent generator from (seed, tags).

    Tags (strings or ints) name the consumer, e.g. rng_for(7, "init") or
    rng_for(7, "shuffle", task_id), so adding a new stream never perturbs
    existing ones.
    """
    keys = [int(seed) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, int):
            keys.append(tag & 0xFFFFFFFF)
        else:
            keys.append(zlib.crc32(str(tag).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(keys))
