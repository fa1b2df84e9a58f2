"""Named random sub-streams derived from one global seed.

``stream(seed, "init")`` and ``stream(seed, "shuffle")`` are independent, and
each depends only on (seed, name), so components reproduce in isolation.
"""

import hashlib

import numpy as np

STREAMS = ("data", "init", "shuffle", "attack-sampling", "split", "noise", "pattern", "attack")


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _name_key(name)]))
