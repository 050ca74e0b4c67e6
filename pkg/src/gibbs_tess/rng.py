"""Counter-based random streams, one per replica."""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def replica_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Philox stream keyed by ``(seed, replica)``; streams never overlap."""
    key = (int(seed) & _MASK64) | ((int(replica) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))
