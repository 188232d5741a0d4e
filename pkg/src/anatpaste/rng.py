"""Seed-derived random streams.

Every random decision in the package flows through a numpy Generator built
here.  Sub-streams are derived by feeding ``(seed, key0, key1, ...)`` into
``numpy.random.SeedSequence``, so per-image / per-run streams are independent
of each other and of scheduling order.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the sub-stream identified by (seed, *keys)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))
