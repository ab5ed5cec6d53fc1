"""Counter-based seed derivation: master -> (K, drop) -> stage.

Every random draw in a drop comes from a generator keyed only by
``(master_seed, K, drop_id, stage)``, so the order in which workers execute
drops cannot change any result.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class Stage(IntEnum):
    TOPOLOGY = 0
    VISIBILITY = 1
    SHADOWING = 2
    RANDOM_PA = 3
    GA = 4
    CHANNEL = 5
    PILOT_NOISE = 6
    DATA = 7


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the node ``key`` of the seed tree."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


def drop_stream(master_seed: int, K: int, drop_id: int, stage: Stage) -> np.random.Generator:
    return stream(master_seed, K, drop_id, int(stage))
