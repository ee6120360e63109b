"""Stable seed derivation.

Every random stream in a run is derived from the master seed plus a label path,
so results never depend on scheduling order or worker count.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, *labels: object) -> int:
    """64-bit seed from a master seed and any number of labels."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "big")


def stream(master_seed: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *labels))


def substream(rng: np.random.Generator, label: object) -> np.random.Generator:
    """Child generator that does not advance the parent differently per label."""
    base = int(rng.integers(0, 2**63 - 1))
    return stream(base, label)
