"""Seeded, splittable random streams.

Every stochastic component of a run owns an independent child generator
spawned from one root, so components never share generator state and whole
runs replay bit-for-bit from a single integer. Spawn order is part of the
reproducibility contract: callers must spawn children in a fixed order.
"""

import numpy as np

__all__ = ["root_stream", "spawn"]


def root_stream(seed: int, salt: int | None = None) -> np.random.Generator:
    """Root generator for a run; ``salt`` opens a disjoint stream family of
    the same seed (training vs testing vs delay measurement)."""
    return np.random.default_rng(seed if salt is None else [seed, salt])


def spawn(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``n`` independent child generators off ``rng``.

    Children are statistically independent of each other and of the
    parent's future output (PCG64 stream spawning).
    """
    if n < 0:
        raise ValueError(f"cannot spawn {n} streams")
    return rng.spawn(n)
