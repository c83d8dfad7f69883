"""Deterministic random-stream derivation.

Every stochastic draw in the package comes from a generator derived from a
master seed plus a tuple of labels (purpose, epoch, step, ...). The labels
are hashed with SHA-256, so streams are stable across processes and
platforms and independent of Python's salted ``hash``.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(master_seed: int, *labels) -> int:
    """Derive a 128-bit integer key from a master seed and label tuple."""
    text = "/".join([str(int(master_seed))] + [str(x) for x in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def derive_rng(master_seed: int, *labels) -> np.random.Generator:
    """Return a fresh Generator for the (seed, labels) stream."""
    return np.random.default_rng(np.random.SeedSequence(stream_key(master_seed, *labels)))
