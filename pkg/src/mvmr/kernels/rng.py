"""Deterministic, splittable random-number source.

Every stochastic routine in the package takes an explicit
:class:`RandomSource` and is a pure function of it: the same
``(seed, stream)`` always reproduces the same draws, and distinct streams
give statistically independent sequences.  That property is what makes
parallel simulation replications reproducible regardless of how they are
scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RandomSource:
    """A ``(seed, stream)`` pair identifying one reproducible draw sequence.

    Parameters
    ----------
    seed : int
        Master seed, 0 <= seed < 2**64.
    stream : int
        Stream (replication) index.  Distinct indices under the same seed
        yield independent sequences.
    """

    seed: int
    stream: int = 0
    # Sub-stream path extended by derive(); internal, defaults to the root.
    path: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")
        if int(self.stream) < 0:
            raise ValueError("stream index must be non-negative")

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this source's sequence."""
        seq = np.random.SeedSequence(
            entropy=int(self.seed),
            spawn_key=(int(self.stream),) + tuple(self.path),
        )
        return np.random.default_rng(seq)

    def derive(self, *tags: int) -> "RandomSource":
        """A child source independent of this one and of siblings with other tags."""
        return RandomSource(self.seed, self.stream, tuple(self.path) + tuple(int(t) for t in tags))

    def with_stream(self, stream: int) -> "RandomSource":
        """Same seed and path, different stream index."""
        return RandomSource(self.seed, stream, self.path)


def normal_draw(rs: RandomSource, mean, sd, size=None):
    """Normal draws as a pure function of ``rs``.

    ``mean`` and ``sd`` may be scalars or arrays (broadcast together);
    ``size`` optionally widens the output shape.  A zero standard
    deviation returns the mean exactly.

    Raises
    ------
    ValueError
        If any standard deviation is negative.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    if np.any(sd < 0):
        raise ValueError("standard deviation must be non-negative")
    shape = np.broadcast(mean, sd).shape if size is None else size
    z = rs.generator().standard_normal(shape)
    out = mean + sd * z
    if np.ndim(out) == 0:
        return float(out)
    return out
