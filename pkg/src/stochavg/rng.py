"""Counter-based random streams keyed by (master seed, path index, channel).

Every path owns a 64-bit seed derived from the master seed and its index, and
every channel of a path (environment clock, migration, branching, noise, ...)
owns an independent Philox stream keyed from that path seed.  A path is
therefore reproducible from its own seed alone, independently of how many
workers run the ensemble or in which order paths are scheduled.
"""
from __future__ import annotations

import numpy as np

# channel ids; the numbers are part of the reproducibility contract
ENV = 0
MIGRATION = 1
BRANCHING = 2
NOISE = 3
COMMON_NOISE = 4
DRAW = 5

_MASK64 = (1 << 64) - 1


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def path_seed(master_seed: int, path_index: int) -> int:
    """64-bit seed of path ``path_index`` in an ensemble seeded with ``master_seed``."""
    ss = np.random.SeedSequence(_check_seed(master_seed), spawn_key=(int(path_index),))
    return int(ss.generate_state(1, np.uint64)[0])


def path_seeds(master_seed: int, n_paths: int) -> np.ndarray:
    return np.array([path_seed(master_seed, i) for i in range(n_paths)], dtype=np.uint64)


def stream(seed: int, channel: int) -> np.random.Generator:
    """Philox generator for one channel of the path with seed ``seed``."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(int(channel),))
    key = ss.generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
