"""Seed derivation shared by the generators and the experiment harness."""

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master, *keys):
    """Mix integer keys into ``master`` with splitmix64, one key at a time."""
    state = int(master) & _MASK64
    for key in keys:
        state = (state ^ splitmix64((int(key) + state) & _MASK64)) & _MASK64
    return state


def rng_for(seed, stream=0):
    """Independent generator for a named sub-stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed) & _MASK64, spawn_key=(int(stream),)))
