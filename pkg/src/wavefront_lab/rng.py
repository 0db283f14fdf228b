"""Deterministic named RNG streams derived from one master seed.

Every stochastic component draws from a stream identified by a name like
``"spde/17"`` or ``"dual/3"``.  Stream seeds are derived by hashing the name,
so results do not depend on the order in which streams are created or used.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_words(name: str) -> tuple[int, ...]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "big") for i in range(0, 16, 4))


def seed_sequence(master_seed: int, name: str) -> np.random.SeedSequence:
    """Seed sequence for the named sub-stream of ``master_seed``."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=_name_words(name))


def stream(master_seed: int, name: str) -> np.random.Generator:
    """Independent generator for the named sub-stream of ``master_seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, name)))
