"""Per-trajectory random streams.

Stream ``i`` of master seed ``s`` is a Philox generator keyed by
``SeedSequence(s, spawn_key=(i,))``: a pure function of ``(s, i)``, so results
do not depend on how trajectories are scheduled across workers.
"""
import numpy as np

MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))
