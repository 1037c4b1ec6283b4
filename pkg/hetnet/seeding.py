"""
Named random sub-streams derived from one master seed
"""
import hashlib
import json

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(master: int, stream: str, *index: int) -> int:
    """Hash (master, stream, index...) into a 64-bit unsigned seed"""
    payload = json.dumps([int(master), stream, *[int(i) for i in index]], separators=(",", ":"))
    digest = hashlib.sha256(payload.encode()).digest()
    return int.from_bytes(digest[:8], "big") & SEED_MASK


def rng_for(master: int, stream: str, *index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, stream, *index))
