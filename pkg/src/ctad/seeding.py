"""Deterministic seed derivation shared by every pipeline stage.

A single user-supplied seed fans out into independent streams by hashing the
stage name together with the seed, so adding a stage never perturbs the
randomness of another one.
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(seed: int, stage: str) -> int:
    """Return a 64-bit seed for ``stage`` derived from ``seed``."""
    digest = hashlib.blake2b(f"{int(seed) & SEED_MASK}:{stage}".encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def stage_rng(seed: int, stage: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, stage))
