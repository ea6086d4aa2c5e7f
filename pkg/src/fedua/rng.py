"""Deterministic random number generation.

Every stochastic component of the simulator draws from a counter-based
Philox generator whose key is derived by hashing a master seed together
with a component-specific label (user id, round index, epoch index, ...).
Derivation is stable across platforms and Python processes, so any piece
of the pipeline can recreate its stream independently: clients need no
coordination and parallel execution cannot change results.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, *parts: int | str) -> int:
    """Derive a 128-bit generator key from a master seed and labels."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int, *parts: int | str) -> np.random.Generator:
    """Philox generator keyed by ``derive_key(seed, *parts)``."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *parts)))
