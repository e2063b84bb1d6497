"""Deterministic random streams.

Every stream is a Philox4x64 counter-based generator whose key comes from
``SeedSequence(seed, spawn_key=(role, batch))``. A stream is therefore fixed
by (session seed, role, batch index) alone, so Alice's side and Bob's side
can be replayed independently, and batches can run in any order or in
parallel without changing a single draw.
"""

from __future__ import annotations

import numpy as np

# role ids are part of the reproducibility contract; append, never renumber
ROLES = {
    "source": 0,
    "channel_a": 1,
    "channel_b": 2,
    "detector_a": 3,
    "detector_b": 4,
    "basis_a": 5,
    "basis_b": 6,
    "pairwise": 7,
    "estimate": 8,
    "filter": 9,
}


def stream(seed: int, role: str, batch: int = 0) -> np.random.Generator:
    if role not in ROLES:
        raise KeyError(f"unknown stream role {role!r}")
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(ROLES[role], int(batch)))
    return np.random.Generator(np.random.Philox(ss))
