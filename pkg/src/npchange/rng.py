"""Keyed random streams.

Every random draw in the package comes from a generator keyed by a master
seed plus a tuple of integer labels, so a stream never depends on how many
other streams were consumed before it or on which worker runs it.
"""

from __future__ import annotations

import numpy as np

# Stream labels; distinct top-level keys keep the families disjoint.
PERMUTATION = 1
REGRESSOR = 2
NOISE = 3
SEGMENT = 4
REPLICATION = 5


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit child seed for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
