"""Seed splitting.

Every random draw comes from a PCG64 generator seeded through
``numpy.random.SeedSequence`` with the entropy list ``[seed, *keys]``, e.g.
``[stream_seed, frame_id]`` or ``[seed, frame_id, track_id]``. Results
therefore depend only on those integers, never on processing order.
"""
import numpy as np

SEED_MIXING = "pcg64-seedsequence"


def keyed_rng(seed: int, *keys: int) -> np.random.Generator:
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(e < 0 for e in entropy):
        raise ValueError(f"seed and keys must be non-negative, got {entropy}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
