"""Reproducible counter-based random streams.

Every ensemble member (classical realization or quantum sample) draws
from its own Philox stream keyed by (seed, member index), so results do
not depend on batching or scheduling order.
"""

import numpy as np


def stream(seed: int, index: int = 0) -> np.random.Generator:
    key = (int(seed) & (2**64 - 1)) << 64 | (int(index) & (2**64 - 1))
    return np.random.Generator(np.random.Philox(key=key))
