"""Deterministic named random substreams.

All randomness in the toolkit flows from a single root seed. Substreams are
addressed by a path of names and indices, e.g. ``rng(seed, "field", 17)`` for
the 17th sample draw, so results do not depend on execution order or on how
work is split across workers.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _entropy_words(part) -> list[int]:
    """Stable 32-bit words for one path element (int or string)."""
    if isinstance(part, (int, np.integer)):
        value = int(part)
        if value < 0:
            raise ValueError(f"seed path ints must be non-negative, got {value}")
        return [value & 0xFFFFFFFF, (value >> 32) & 0xFFFFFFFF]
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in (0, 4)]


def seed_sequence(root_seed: int, *path) -> np.random.SeedSequence:
    """SeedSequence for the substream addressed by ``path`` under ``root_seed``."""
    entropy: list[int] = _entropy_words(root_seed)
    for part in path:
        entropy.extend(_entropy_words(part))
    return np.random.SeedSequence(entropy)


def rng(root_seed: int, *path) -> np.random.Generator:
    """Fresh numpy generator for a named substream."""
    return np.random.default_rng(seed_sequence(root_seed, *path))


def torch_seed(root_seed: int, *path) -> int:
    """64-bit seed for torch generators, derived from the same substream tree."""
    state = seed_sequence(root_seed, *path).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
