"""Named, seed-derived random streams.

Every stochastic consumer asks for its own stream by name, so adding a new
consumer never shifts the numbers another one sees.
"""
import hashlib

import numpy as np


def _name_key(name):
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def stream(seed, name):
    """Return a fresh generator for ``(seed, name)``; same inputs, same numbers."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *_name_key(name)])))


class Streams:
    """A seed plus a name prefix. ``child`` splits off an independent namespace."""

    def __init__(self, seed, prefix=""):
        self.seed = int(seed)
        self.prefix = prefix

    def get(self, name):
        return stream(self.seed, self.prefix + name)

    def child(self, name):
        return Streams(self.seed, self.prefix + name + "/")

    def __repr__(self):
        return f"Streams(seed={self.seed}, prefix={self.prefix!r})"
