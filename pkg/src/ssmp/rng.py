"""Seeded random streams.

A stream is identified by a ``(seed, stream_id)`` pair and wraps a PCG64
generator seeded through :class:`numpy.random.SeedSequence`, so distinct
pairs give independent sequences and equal pairs reproduce bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RngStream", "as_generator"]


@dataclass
class RngStream:
    seed: int
    stream_id: int = 0
    key: tuple[int, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *self.key))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @property
    def gen(self) -> np.random.Generator:
        return self._gen

    def derive(self, index: int) -> "RngStream":
        """Child stream for replica ``index``; independent of the parent's state."""
        return RngStream(self.seed, self.stream_id, (*self.key, int(index)))


def as_generator(rng: RngStream | np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(0 if rng is None else int(rng)).gen
