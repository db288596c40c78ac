"""Seeded generators.

Every random stream is a Philox counter-based generator keyed by
``SeedSequence(seed, spawn_key=...)``, so a (seed, substream) pair yields the
same numbers on every platform and independent of worker count.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform draws on (0, 1]."""
    return 1.0 - rng.random(size)
