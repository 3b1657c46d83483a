"""Enumerable profile spaces and mechanism outcome tables.

A profile over ``n`` agents and ``m`` objects is identified by the tuple of
its agents' order indices (orders numbered as ``itertools.permutations``
emits them); profiles are numbered so that this tuple is the base-``m!``
expansion of the index with agent 0 most significant.  Iterating a
:class:`ProfileSpace` therefore visits profiles in that canonical order,
which is also the tie-break used for every reported witness.
"""

from __future__ import annotations

import itertools
import math
from functools import cached_property
from typing import Callable, Iterator

import numpy as np

from .core import DetAllocation, LexOrder, LexProfile

DEFAULT_MAX_PROFILES = 250_000


class BudgetExceeded(ValueError):
    """An exhaustive search would exceed its configured budget."""


def bundle_mask(bundle) -> int:
    mask = 0
    for o in bundle:
        mask |= 1 << o
    return mask


def mask_bundle(mask: int) -> frozenset:
    return frozenset(o for o in range(int(mask).bit_length()) if mask >> o & 1)


class ProfileSpace:
    def __init__(self, n: int, m: int, max_profiles: int = DEFAULT_MAX_PROFILES):
        self.n, self.m = n, m
        self.K = math.factorial(m)
        self.size = self.K**n
        if self.size > max_profiles:
            raise BudgetExceeded(
                f"{self.size} profiles for n={n}, m={m} exceed the budget of {max_profiles}"
            )
        self.orders = [LexOrder(r) for r in itertools.permutations(range(m))]
        self.order_index = {o.ranking: k for k, o in enumerate(self.orders)}
        self.place = np.array([self.K ** (n - 1 - i) for i in range(n)], dtype=np.int64)

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[LexProfile]:
        for prefs in itertools.product(self.orders, repeat=self.n):
            yield LexProfile(prefs)

    def profile(self, index: int) -> LexProfile:
        return LexProfile(tuple(self.orders[int(d)] for d in self.digits[index]))

    def index(self, profile: LexProfile) -> int:
        return sum(self.order_index[p.ranking] * int(w) for p, w in zip(profile, self.place))

    @cached_property
    def digits(self) -> np.ndarray:
        """(P, n) order index of every agent in every profile."""
        idx = np.arange(self.size, dtype=np.int64)
        return (idx[:, None] // self.place[None, :]) % self.K

    @cached_property
    def weights(self) -> np.ndarray:
        """(K, 2**m) lexicographic weight of each bundle mask under each order."""
        w = np.zeros((self.K, 1 << self.m), dtype=np.int64)
        for k, order in enumerate(self.orders):
            for mask in range(1 << self.m):
                w[k, mask] = order.weight(mask_bundle(mask))
        return w

    @cached_property
    def order_action(self) -> np.ndarray:
        """(K_phi, K) index of the order obtained by renaming objects with phi."""
        act = np.zeros((self.K, self.K), dtype=np.int64)
        for p, phi in enumerate(self.orders):
            for k, order in enumerate(self.orders):
                act[p, k] = self.order_index[tuple(phi.ranking[o] for o in order.ranking)]
        return act

    @cached_property
    def mask_action(self) -> np.ndarray:
        """(K_phi, 2**m) image of each bundle mask under phi."""
        act = np.zeros((self.K, 1 << self.m), dtype=np.int64)
        for p, phi in enumerate(self.orders):
            for mask in range(1 << self.m):
                act[p, mask] = bundle_mask(phi.ranking[o] for o in mask_bundle(mask))
        return act

    def report_indices(self, agent: int) -> np.ndarray:
        """(P, K): index of each profile with ``agent``'s order replaced by each order."""
        base = np.arange(self.size, dtype=np.int64) - self.digits[:, agent] * self.place[agent]
        return base[:, None] + np.arange(self.K, dtype=np.int64)[None, :] * self.place[agent]

    def phis(self) -> list[tuple[int, ...]]:
        """Object permutations, numbered like the orders (``phi[o]`` is o's new name)."""
        return [o.ranking for o in self.orders]


class OutcomeTable:
    """A mechanism evaluated once at every profile of a space."""

    def __init__(self, space: ProfileSpace, masks: np.ndarray):
        self.space = space
        self.masks = masks

    @classmethod
    def build(
        cls,
        mech: Callable[[LexProfile], DetAllocation],
        n: int,
        m: int,
        max_profiles: int = DEFAULT_MAX_PROFILES,
    ) -> OutcomeTable:
        space = ProfileSpace(n, m, max_profiles)
        masks = np.array(
            [[bundle_mask(b) for b in mech(p)] for p in space], dtype=np.int64
        ).reshape(space.size, n)
        return cls(space, masks)

    def allocation(self, index: int) -> DetAllocation:
        return DetAllocation(tuple(mask_bundle(x) for x in self.masks[index]))

    def report_indices(self, agent: int) -> np.ndarray:
        return self.space.report_indices(agent)
