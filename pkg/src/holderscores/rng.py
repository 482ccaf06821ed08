"""Seed plumbing: one master seed, splittable counter-based streams."""

import numpy as np


def rng_for(seed, *path):
    """Return a Philox generator addressed by (seed, path).

    Streams with distinct paths are statistically independent, so sweep rows,
    multi-start branches and Monte-Carlo replicates can each derive their own
    generator from a single master seed and stay reproducible regardless of
    execution order.
    """
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
