"""Seed handling shared by the sampling oracles and the CLI."""

import os

import numpy as np

DEFAULT_SEED = 20240101


def resolve_seed(seed=None):
    """Explicit seed, else ``PHASEGAIN_SEED``, else a fixed default."""
    if seed is not None:
        return int(seed)
    env = os.environ.get("PHASEGAIN_SEED")
    if env not in (None, ""):
        return int(env)
    return DEFAULT_SEED


def generator(seed=None):
    return np.random.default_rng(resolve_seed(seed))


def unit_vectors(rng, n, count):
    """`count` complex unit vectors in C^n, uniform on the sphere, as columns."""
    x = rng.standard_normal((n, count)) + 1j * rng.standard_normal((n, count))
    return x / np.linalg.norm(x, axis=0)
