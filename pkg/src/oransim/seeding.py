"""Deterministic RNG derivation.

Every random stream in a run is derived from the run seed plus a string
path, so independent components never share or race on a generator and
any stage can be re-run in isolation with identical results.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_entropy(tag: str) -> int:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(seed: int, *tags: str) -> np.random.SeedSequence:
    """SeedSequence for (seed, tags); stable across processes and platforms."""
    return np.random.SeedSequence([int(seed)] + [_tag_entropy(t) for t in tags])


def derive_rng(seed: int, *tags: str) -> np.random.Generator:
    """Independent Generator for the given seed and component path."""
    return np.random.default_rng(seed_sequence(seed, *tags))


def derive_int(seed: int, *tags: str) -> int:
    """Scalar seed (e.g. for torch.manual_seed) derived from the same space."""
    return int(seed_sequence(seed, *tags).generate_state(1, np.uint64)[0] % (2**63))
