"""Deterministic sub-seed derivation for pipeline stages.

Every random decision in the toolkit is driven by a single root seed.
Stages derive their own seeds through a fixed 64-bit mixing function so
that changing the sample count consumed by one stage never shifts the
random streams of the others.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stage_seed", "rng_for"]


def stage_seed(root_seed: int, *labels) -> int:
    """Derive a 64-bit child seed from a root seed and a label path.

    The mixing function is BLAKE2b-64 over the ASCII rendering
    ``"<root>/<label>/<label>/..."``; it is stable across platforms,
    Python versions, and numpy versions.
    """
    key = "/".join([str(int(root_seed))] + [str(l) for l in labels])
    digest = hashlib.blake2b(key.encode("ascii"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_for(root_seed: int, *labels) -> np.random.Generator:
    """A PCG64 generator seeded with ``stage_seed(root_seed, *labels)``."""
    return np.random.default_rng(stage_seed(root_seed, *labels))
