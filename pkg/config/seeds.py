import hashlib

import numpy as np


def derive_seed(root: int, subsystem: str, *salt: int | str) -> int:
    """Split the root seed into an independent 63-bit seed per subsystem (and optional salt)."""
    key = ":".join([str(int(root)), subsystem, *map(str, salt)])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def make_rng(seed: int) -> np.random.Generator:
    # Philox is counter based: the stream depends only on the seed
    return np.random.Generator(np.random.Philox(seed))
