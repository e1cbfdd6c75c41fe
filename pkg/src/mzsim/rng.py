"""Reproducible per-run random streams.

Run ``i`` of an ensemble seeded with ``s`` always draws from
``PCG64(SeedSequence(entropy=s, spawn_key=(i,)))``, so any single run can be
replayed without regenerating its predecessors.
"""

from __future__ import annotations

import numpy as np

ALGORITHM = "pcg64"
DERIVATION = "seedsequence(entropy=seed, spawn_key=(run_index,))"


def run_stream(seed: int, run_index: int) -> np.random.Generator:
    if run_index < 0:
        raise ValueError("run_index must be non-negative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(run_index,))
    return np.random.Generator(np.random.PCG64(ss))
