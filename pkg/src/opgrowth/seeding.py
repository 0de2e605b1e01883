"""Reproducible random streams derived from a master seed and a path string."""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed", "derive_rng"]


def derive_seed(seed: int, path: str) -> np.random.SeedSequence:
    """Seed sequence keyed by ``(seed, path)``; independent of call order."""
    digest = hashlib.blake2b(path.encode(), digest_size=16).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, *words])


def derive_rng(seed: int, path: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, path))
