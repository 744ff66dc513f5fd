"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, *keys)`` through a
``SeedSequence`` spawn key, so a given key always yields the same numbers no
matter how many other streams were opened before it.
"""

from __future__ import annotations

import numpy as np

# Stream namespaces; kept small and stable because they enter the keys.
JUMP = 1
BROWNIAN = 2
LAMBDA = 3
LORENZ = 4
MISC = 9


def _zigzag(k: int) -> int:
    # negative keys (e.g. mode -n) map to odd naturals
    return 2 * k if k >= 0 else -2 * k - 1


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, keys...)``."""
    if seed is None:
        raise ValueError("a seed is mandatory")
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=tuple(_zigzag(int(k)) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
