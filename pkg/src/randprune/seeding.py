"""Deterministic RNG stream derivation.

Every source of randomness in a run is a generator derived from the run
seed plus a tuple of integer keys (a stream family tag and indices such
as stage, candidate id, layer, epoch).  Streams are independent of each
other and of evaluation order, so adding candidates or reordering work
never perturbs existing draws.
"""

from __future__ import annotations

import numpy as np

# Stream family tags. Never reuse or renumber.
TAG_INIT = 0        # weight initialization
TAG_DENSE = 1       # dense-phase epoch shuffles: (seed, TAG_DENSE, epoch)
TAG_MASK = 2        # mask sampling: (seed, TAG_MASK, stage, candidate, layer)
TAG_EMEP = 3        # candidate scoring epoch: (seed, TAG_EMEP, stage, candidate)
TAG_FINETUNE = 4    # stage finetune epochs: (seed, TAG_FINETUNE, stage, epoch)
TAG_DATA = 5        # synthetic dataset generation
TAG_SPLIT = 6       # train/validation split


def stream(*key: int) -> np.random.Generator:
    """Return a generator for the given integer key tuple."""
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def substream_seed(*key: int) -> int:
    """Collapse a key tuple to a plain integer seed for APIs that take one."""
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])
