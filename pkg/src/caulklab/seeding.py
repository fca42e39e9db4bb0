"""Splittable seed derivation.

Every random draw in the package goes through a generator built from a
64-bit seed. Child seeds are derived by hashing the parent seed together
with a key path, so independent cells of an experiment never share
generator state and the outcome does not depend on execution order.
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(seed: int, *key: object) -> int:
    """Return a 64-bit child seed for ``key`` under ``seed``.

    The scheme is ``blake2b(repr((seed, *key)))`` truncated to 8 bytes,
    read little-endian. Keys should be ints or strings so that their
    ``repr`` is stable across runs.
    """
    payload = repr((int(seed) & SEED_MASK, *key)).encode()
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int, *key: object) -> np.random.Generator:
    if key:
        seed = derive_seed(seed, *key)
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))
