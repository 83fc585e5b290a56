"""Seed derivation helpers.

Every stochastic routine in the package takes an explicit integer seed and
builds its generator from it on the spot, so results never depend on call
order and independent evaluations can run in parallel.
"""
from __future__ import annotations

import numpy as np


def derive_rng(*components: int) -> np.random.Generator:
    """Generator keyed by a tuple of non-negative integers.

    Distinct tuples give statistically independent streams (numpy
    SeedSequence hashing); the same tuple always reproduces the same
    stream.
    """
    return np.random.default_rng(_sequence(components))


def child_seed(*components: int) -> int:
    """Collapse a component tuple into a single reproducible integer seed."""
    return int(_sequence(components).generate_state(1, np.uint64)[0])


def _sequence(components) -> np.random.SeedSequence:
    for c in components:
        if c < 0:
            raise ValueError(f"seed components must be non-negative, got {c}")
    return np.random.SeedSequence(list(components))
