"""Counter-based random streams keyed by (master seed, experiment, N, index)."""
from __future__ import annotations

import zlib

import numpy as np


def _entropy(seed):
    if seed is None:
        return None
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return [int(s) for s in seed]


def make_rng(seed=None):
    """``numpy`` generator on a Philox stream; ``seed`` is an int or a tuple of ints."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_entropy(seed))))


def experiment_key(name):
    """Stable 32-bit key of an experiment name (CRC32, platform independent)."""
    return zlib.crc32(name.encode("utf-8")) & 0xFFFFFFFF


def sample_seed(master, experiment, N, index):
    """Seed tuple of one disorder sample; independent of scheduling order."""
    return (int(master), experiment_key(experiment), int(N), int(index))
