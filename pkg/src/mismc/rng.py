"""Deterministic stream derivation.

Every stochastic task (one SMC run, one pilot batch, one prior-sampling
batch) owns an independent counter-based stream derived from the master
seed and a structured task key, so results do not depend on scheduling
order.
"""
from __future__ import annotations

import numpy as np

# tags namespace the derived streams by purpose
TAG_SMC = 1
TAG_PILOT = 2
TAG_RATE = 3
TAG_DATA = 4
TAG_REFERENCE = 5


def stream(master_seed: int, tag: int, *key: int) -> np.random.Generator:
    """Independent Philox stream for task (tag, *key) under master_seed."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(tag), *map(int, key)))
    return np.random.Generator(np.random.Philox(ss))


def alpha_key(alpha) -> list[int]:
    """Encode a multi-index into a flat stream key (length then entries)."""
    entries = list(alpha)
    return [len(entries), *entries]
