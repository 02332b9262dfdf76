"""Deterministic seed derivation.

Every random choice in a round or experiment is drawn from a source seeded by
hashing the master seed together with a tuple of labels, so results do not
depend on the order in which clients or trials are processed.
"""

from __future__ import annotations

import hashlib
import os
import random

import numpy as np

SEED_ENV_VAR = "CCESA_SEED"
DEFAULT_SEED = 2021


def default_seed() -> int:
    """Master seed, overridable through the ``CCESA_SEED`` environment variable."""
    raw = os.environ.get(SEED_ENV_VAR)
    return int(raw) if raw else DEFAULT_SEED


def derive_seed(master: int, *labels: object) -> int:
    h = hashlib.blake2b(digest_size=8, person=b"ccesa-seed")
    h.update(str(int(master)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "big")


def make_rng(master: int, *labels: object) -> random.Random:
    return random.Random(derive_seed(master, *labels))


def make_np_rng(master: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *labels))
