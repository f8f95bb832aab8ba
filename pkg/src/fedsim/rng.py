"""Named, splittable random substreams.

Every random draw in fedsim comes from ``substream(root, purpose, *ids)``.
The 64-bit key is built by folding the purpose string and the integer ids
through splitmix64, so adding a client or a round never perturbs the draws
of any other (purpose, ids) combination.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _purpose_key(purpose: str) -> int:
    digest = hashlib.blake2b(purpose.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(root: int, purpose: str, *ids: int) -> int:
    """Deterministic 64-bit key for ``(root, purpose, ids...)``."""
    h = splitmix64(int(root) & MASK64)
    h = splitmix64(h ^ _purpose_key(purpose))
    for i in ids:
        h = splitmix64(h ^ (int(i) & MASK64))
    return h


def substream(root: int, purpose: str, *ids: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(root, purpose, *ids)))
