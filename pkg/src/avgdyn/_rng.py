"""Seed derivation shared by generators, dynamics and the ensemble runner.

Every stream is a Philox (counter-based) generator keyed by a master seed
plus a tuple of labels, so results do not depend on call order or on how
work is scheduled across threads.
"""

from __future__ import annotations

import hashlib
import secrets

import numpy as np

SEED_BITS = 63


def _label_word(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def make_rng(seed: int, *labels) -> np.random.Generator:
    """Return an independent generator for ``(seed, *labels)``."""
    if seed is None:
        raise ValueError("an explicit seed is required")
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_label_word(x) for x in labels))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed: int, *labels) -> int:
    """Child seed for ``(seed, *labels)``, e.g. run ``j`` of an ensemble."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_label_word(x) for x in labels))
    return int(seq.generate_state(2, dtype=np.uint64)[0] >> np.uint64(64 - SEED_BITS))


def fresh_seed() -> int:
    return secrets.randbits(SEED_BITS)


def rademacher(n: int, seed: int) -> np.ndarray:
    """n independent fair +-1 values, one draw per vertex in vertex order."""
    bits = make_rng(seed, "rademacher").integers(0, 2, size=n)
    return (2 * bits - 1).astype(float)
