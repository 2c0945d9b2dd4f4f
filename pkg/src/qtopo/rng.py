"""Seed streams.

All randomness goes through numpy's ``SeedSequence`` + ``PCG64``.  A stream
is identified by a master seed and a tuple of small integers (a purpose tag
and, usually, a sample index), so every sample can be regenerated in
isolation and results never depend on generation order.
"""

from __future__ import annotations

import numpy as np

# purpose tags; never renumber, stored seeds depend on them
TRAIN = 1
TEST = 2
PREDICT = 3
PCA = 4
INIT = 5
SHUFFLE = 6
DROPOUT = 7
SPLIT = 8

# sub-streams of one sample seed
SUB_PARAMS = 0
SUB_TRANSLATE = 1
SUB_ROTATE = 2
SUB_NOISE = 3  # attempt t uses (SUB_NOISE, t)


def seed_sequence(master: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))


def generator(master: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(master, *key)))


def sample_seed(master: int, tag: int, index: int) -> int:
    """64-bit per-sample seed, the value stored in dataset records."""
    return int(seed_sequence(master, tag, index).generate_state(1, np.uint64)[0])
