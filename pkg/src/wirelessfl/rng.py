"""Named, counter-based random streams for reproducible simulation.

Every source of randomness in an experiment is addressed by the tuple
(seed, device, round, purpose) and backed by a Philox counter-based bit
generator, so replicas can run in parallel (or out of order) and still
produce byte-identical results.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "channel": 0,
    "dither": 1,
    "batch": 2,
    "noise": 3,
    "placement": 4,
    "data": 5,
}


def stream(seed: int, device: int = 0, round_idx: int = 0,
           purpose: str = "channel") -> np.random.Generator:
    """Return the generator addressed by (seed, device, round, purpose).

    The same tuple always yields the same stream; distinct tuples yield
    statistically independent streams.
    """
    try:
        purpose_id = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown rng purpose {purpose!r}") from None
    if device < 0 or round_idx < 0:
        raise ValueError("device and round indices must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=(purpose_id, int(device), int(round_idx)))
    return np.random.Generator(np.random.Philox(ss))
