"""Counter-based random streams.

Every random quantity in the simulator is drawn from a Philox stream whose
128-bit key is derived from (seed, purpose tag, ids...). That makes each
draw a pure function of its identifiers: no generator state is threaded
through the code, results do not depend on evaluation order, and re-deriving
a stream always reproduces the same bits.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Purpose tags keep unrelated streams (task vectors, agent specs, noise, ...)
# from colliding even when their numeric ids coincide.
TAG_TASK = 1
TAG_AGENT = 2
TAG_NOISE = 3
TAG_DOMAIN = 4
TAG_SELECT = 5
TAG_INIT = 6
TAG_DROPOUT = 7


def mix64(x: int) -> int:
    """SplitMix64 finalizer: avalanche a 64-bit value."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def stream_key(seed: int, *ids: int) -> int:
    """Derive a 128-bit Philox key from a seed and a tuple of identifiers."""
    h = mix64(seed & _MASK64)
    for i in ids:
        h = mix64(h ^ mix64(i & _MASK64))
    return (mix64(h) << 64) | h


def substream(seed: int, *ids: int) -> np.random.Generator:
    """A fresh generator for the stream identified by (seed, ids...)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *ids)))
