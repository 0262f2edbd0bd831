"""Seeded, splittable random streams on top of numpy's SeedSequence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RngState:
    """A seed plus a spawn path; identical states give identical streams."""

    seed: int
    path: tuple = ()

    def child(self, i):
        return RngState(self.seed, self.path + (int(i),))


@dataclass
class Rng:
    state: RngState
    _gen: np.random.Generator = field(init=False, repr=False)
    _counter: int = field(default=0, init=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(entropy=self.state.seed, spawn_key=self.state.path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @classmethod
    def from_seed(cls, seed):
        return cls(RngState(int(seed)))

    @property
    def generator(self):
        return self._gen

    def split(self, n):
        """``n`` independent child streams, disjoint from this one and each other."""
        base = self._counter
        self._counter += n
        return [Rng(self.state.child(base + i)) for i in range(n)]

    def normal(self, shape):
        return self._gen.standard_normal(shape)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def choice(self, a, size=None, replace=True, p=None):
        return self._gen.choice(a, size=size, replace=replace, p=p)


def gaussian(rng, shape):
    """I.i.d. standard normal array of ``shape`` drawn from ``rng``."""
    return rng.normal(tuple(shape))
