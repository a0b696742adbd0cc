"""Counter-based random streams derived from one global seed.

Each consumer asks for ``(seed, purpose, index)``; adding a new purpose never
shifts the numbers another purpose sees.
"""

import hashlib

import numpy as np


def _tag(purpose: str) -> int:
    return int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:8], "little")


def derive_rng(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), _tag(purpose), int(index)])
    return np.random.Generator(np.random.Philox(ss))
