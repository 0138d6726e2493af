"""Deterministic per-subsystem RNG streams split from one master seed.

Each subsystem (weight init, augmentation, splits, probe) draws from its own
named stream, so toggling one subsystem never perturbs another's randomness.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, namespace: str) -> int:
    """Stable 64-bit seed for a named subsystem stream."""
    digest = hashlib.sha256(f"{master_seed}:{namespace}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def subsystem_rng(master_seed: int, namespace: str) -> np.random.Generator:
    """Generator seeded from (master_seed, namespace); stable across runs and platforms."""
    return np.random.default_rng(derive_seed(master_seed, namespace))
