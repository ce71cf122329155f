"""Counter-based seed streams for reproducible parallel ensembles.

Every source of randomness in the package derives its generator from a
64-bit master seed plus an integer path, e.g. ``spawn_rng(master, k)`` for
replica ``k``.  Streams with different paths are statistically independent
and the mapping is stable across runs and platforms (Philox is
counter-based, so no generator state is ever shared between replicas).
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_key(master_seed: int, *path: int) -> int:
    """Mix ``(master_seed, path...)`` into a single 64-bit stream key."""
    acc = _splitmix64(master_seed & _MASK64)
    for p in path:
        acc = _splitmix64(acc ^ (int(p) & _MASK64))
    return acc


def spawn_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream addressed by ``(master_seed, path...)``.

    Uses the Philox counter-based bit generator keyed on the master seed
    and the mixed path, so replica streams never overlap.
    """
    key = np.array([master_seed & _MASK64, derive_key(master_seed, 1, *path)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
