"""Sub-seed derivation so one top-level seed reproduces an entire run.

Every consumer of randomness derives its own stream from (seed, tag, ...);
the tags below are fixed and documented in the README.
"""

from __future__ import annotations

import numpy as np

BALANCE = 1
FOLDS = 2
TRAIN = 3
SUBSET = 4
PERTURB = 5


def sub_rng(seed: int, *key: int) -> np.random.Generator:
    parts = [seed & 0xFFFFFFFFFFFFFFFF] + [k & 0xFFFFFFFFFFFFFFFF for k in key]
    return np.random.default_rng(parts)
