"""Counter-based random streams keyed by (seed, purpose, indices).

Every Monte Carlo path draws from its own Philox stream derived from the
master seed and a tuple of integer keys, so results never depend on the
order in which paths are scheduled.
"""

from __future__ import annotations

import zlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _key_word(part: Key) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError("stream keys must be non-negative")
    return int(part)


def stream(seed: int, *keys: Key) -> np.random.Generator:
    """Return an independent generator for ``(seed, *keys)``.

    String keys are hashed with CRC32, which is stable across interpreter
    runs (unlike ``hash``).
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_word(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))


def as_generator(seed_or_rng: int | np.random.Generator, *keys: Key) -> np.random.Generator:
    """Accept either a ready generator or an integer seed."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return stream(int(seed_or_rng), *keys)
