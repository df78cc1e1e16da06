import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from an arbitrary tuple of ints/strings.

    Independent of PYTHONHASHSEED, so worker processes agree with the parent.
    """
    h = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
