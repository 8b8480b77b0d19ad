"""Seed handling.

A master seed becomes a :class:`numpy.random.SeedSequence`; components call
``spawn`` on it so env, parameter-init, sampling and minibatch streams are
statistically independent yet fully determined by the master seed.
"""

from __future__ import annotations

import numpy as np


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def spawn(seed, n: int) -> list[np.random.SeedSequence]:
    return seed_sequence(seed).spawn(n)
