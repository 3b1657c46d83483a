"""Deterministic quota mechanisms.

Every mechanism class below is a frozen dataclass whose instances are
callable on a :class:`~qmech.core.LexProfile` and return a
:class:`~qmech.core.DetAllocation`.  The audits in :mod:`qmech.axioms`
treat them (and any other such callable) as black boxes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .core import (
    DetAllocation,
    InfeasibleError,
    LexOrder,
    LexProfile,
    PickingSequence,
    Quota,
    ValidationError,
    top_k,
    validate,
)

Ordering = tuple  # tuple[int, ...] of distinct agents, one per quota position
History = tuple  # tuple[frozenset, ...] of bundles handed out so far

Mechanism = Callable[[LexProfile], DetAllocation]


class InvalidPolicyError(ValidationError):
    """A dictator policy named an agent who already picked."""


def check_ordering(order: Sequence[int], n: int, quota: Quota | None = None) -> Ordering:
    order = tuple(int(a) for a in order)
    if len(set(order)) != len(order):
        raise ValidationError(f"ordering {order} repeats an agent")
    if any(not 0 <= a < n for a in order):
        raise ValidationError(f"ordering {order} names agents outside 0..{n - 1}")
    if quota is not None and len(order) != len(quota):
        raise ValidationError(f"ordering has {len(order)} agents but the quota has {len(quota)} positions")
    return order


def run_serial(profile: LexProfile, order: Sequence[int], quota: Quota) -> DetAllocation:
    """Serial dictatorship: position i's agent takes its best ``quota[i]`` remaining objects."""
    n, m = profile.n, profile.m
    validate(quota, n, m)
    order = check_ordering(order, n, quota)
    remaining = set(range(m))
    bundles = [frozenset()] * n
    for agent, size in zip(order, quota):
        bundle = top_k(profile[agent], remaining, size)
        bundles[agent] = bundle
        remaining -= bundle
    return DetAllocation(tuple(bundles))


@dataclass(frozen=True)
class DictatorPolicy:
    """Chooses the next dictator from the bundles handed out so far.

    ``table`` maps a history prefix (tuple of bundles, in allocation order)
    to a continuation: a priority list of agents.  For a given history the
    longest matching prefix wins and the next dictator is the first agent
    of its continuation who has not picked yet; ``default`` is the
    continuation of the empty prefix.  The policy never sees preferences.
    """

    first: int
    table: Mapping[History, tuple[int, ...]] = field(default_factory=dict)
    default: tuple[int, ...] = ()

    def __post_init__(self):
        table = {}
        for prefix, cont in dict(self.table).items():
            cont = (int(cont),) if isinstance(cont, int) else tuple(int(a) for a in cont)
            table[tuple(frozenset(b) for b in prefix)] = cont
        object.__setattr__(self, "first", int(self.first))
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "default", tuple(int(a) for a in self.default))

    def __hash__(self):
        items = sorted(((tuple(sorted(b) for b in k), v) for k, v in self.table.items()))
        return hash((self.first, tuple(items), self.default))

    def continuation(self, history: History) -> tuple[int, ...]:
        for cut in range(len(history), 0, -1):
            cont = self.table.get(history[:cut])
            if cont is not None:
                return cont
        return self.default

    def next_agent(self, history: History, served: Sequence[int]) -> int:
        if not history:
            agent = self.first
        else:
            cont = self.continuation(tuple(history))
            agent = next((a for a in cont if a not in served), None)
            if agent is None:
                raise InvalidPolicyError(f"policy has no unserved agent for history {history}")
        if agent in served:
            raise InvalidPolicyError(f"policy picked agent {agent} twice")
        return agent

    def agents(self) -> set[int]:
        out = {self.first, *self.default}
        for cont in self.table.values():
            out.update(cont)
        return out

    @classmethod
    def constant(cls, order: Sequence[int]) -> DictatorPolicy:
        order = tuple(order)
        return cls(order[0], {}, order[1:])


def branch_policy(
    first: int,
    trigger: frozenset,
    if_match: Sequence[int],
    otherwise: Sequence[int],
) -> DictatorPolicy:
    """After ``first`` picks, continue with ``if_match`` when its bundle is ``trigger``."""
    return DictatorPolicy(first, {(frozenset(trigger),): tuple(if_match)}, tuple(otherwise))


def run_sequential(profile: LexProfile, policy: DictatorPolicy, quota: Quota) -> DetAllocation:
    n, m = profile.n, profile.m
    validate(quota, n, m)
    remaining = set(range(m))
    bundles = [frozenset()] * n
    history: list[frozenset] = []
    served: list[int] = []
    for size in quota:
        agent = policy.next_agent(tuple(history), served)
        if not 0 <= agent < n:
            raise InvalidPolicyError(f"policy named agent {agent} outside 0..{n - 1}")
        bundle = top_k(profile[agent], remaining, size)
        bundles[agent] = bundle
        remaining -= bundle
        history.append(bundle)
        served.append(agent)
    return DetAllocation(tuple(bundles))


def realized_order(profile: LexProfile, policy: DictatorPolicy, quota: Quota) -> Ordering:
    """The dictator sequence a policy produces at ``profile``."""
    alloc = run_sequential(profile, policy, quota)
    history: list[frozenset] = []
    served: list[int] = []
    for _ in quota:
        agent = policy.next_agent(tuple(history), served)
        history.append(alloc[agent])
        served.append(agent)
    return tuple(served)


def run_interleaving(profile: LexProfile, seq: PickingSequence) -> DetAllocation:
    """Each turn, the named agent takes its single best remaining object."""
    n, m = profile.n, profile.m
    if len(seq) > m:
        raise InfeasibleError(f"picking sequence has {len(seq)} turns but only {m} objects")
    if any(not 0 <= a < n for a in seq):
        raise ValidationError(f"picking sequence names agents outside 0..{n - 1}")
    remaining = set(range(m))
    bundles: list[set[int]] = [set() for _ in range(n)]
    for agent in seq:
        obj = next(o for o in profile[agent].ranking if o in remaining)
        bundles[agent].add(obj)
        remaining.discard(obj)
    return DetAllocation(tuple(frozenset(b) for b in bundles))


def strict_alternation_seq(n: int, m: int) -> PickingSequence:
    """1 2 ... n 1 2 ... n ..., truncated to ``m`` turns."""
    return PickingSequence(tuple(t % n for t in range(m)))


def draft_seq(order: Sequence[int], m: int) -> PickingSequence:
    """``order`` then its reverse, repeated and truncated to ``m`` turns."""
    order = tuple(order)
    if not order:
        raise ValidationError("draft order must name at least one agent")
    cycle = order + order[::-1]
    return PickingSequence(tuple(cycle[t % len(cycle)] for t in range(m)))


def balanced_alternation_seq(n: int, m: int) -> PickingSequence:
    """Mirrored picking (1 2 3 3 2 1 ...), truncated to ``m`` turns."""
    return draft_seq(range(n), m)


def contiguous_serial_form(seq: PickingSequence) -> tuple[Ordering, Quota] | None:
    """(ordering, quota) for a sequence whose every agent's turns are contiguous."""
    order: list[int] = []
    sizes: list[int] = []
    for agent, group in itertools.groupby(seq.turns):
        if agent in order:
            return None
        order.append(agent)
        sizes.append(len(list(group)))
    if not order:
        return None
    return tuple(order), Quota(tuple(sizes))


def _concat_identical(profile: LexProfile, picks: Sequence[tuple[int, frozenset]]) -> LexProfile:
    ranking: list[int] = []
    for agent, bundle in picks:
        ranking.extend(profile[agent].sorted(bundle))
    ranking.extend(o for o in range(profile.m) if o not in set(ranking))
    return LexProfile.identical(LexOrder(tuple(ranking)), profile.n)


def build_identical_profile(profile: LexProfile, order: Sequence[int], quota: Quota) -> LexProfile:
    """Identical profile with the same serial outcome.

    Each dictator's picked bundle is listed in that dictator's own order;
    never-assigned objects go last by index.
    """
    alloc = run_serial(profile, order, quota)
    order = check_ordering(order, profile.n, quota)
    return _concat_identical(profile, [(a, alloc[a]) for a in order])


def build_identical_profile_seq(profile: LexProfile, policy: DictatorPolicy, quota: Quota) -> LexProfile:
    alloc = run_sequential(profile, policy, quota)
    order = realized_order(profile, policy, quota)
    return _concat_identical(profile, [(a, alloc[a]) for a in order])


# ---------------------------------------------------------------------------
# mechanism specs (callable)


def _validate_space(profile: LexProfile, n: int | None, m: int | None) -> None:
    if n is not None and profile.n != n:
        raise ValidationError(f"mechanism expects {n} agents, got {profile.n}")
    if m is not None and profile.m != m:
        raise ValidationError(f"mechanism expects {m} objects, got {profile.m}")


@dataclass(frozen=True)
class SerialDictatorQuota:
    order: tuple[int, ...]
    quota: Quota

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(a) for a in self.order))
        if len(self.order) != len(self.quota):
            raise ValidationError("ordering length must equal the number of quota positions")

    kind = "sd"

    @property
    def total(self) -> int:
        return self.quota.total

    def validate(self, n: int, m: int) -> None:
        validate(self.quota, n, m)
        check_ordering(self.order, n, self.quota)

    def __call__(self, profile: LexProfile) -> DetAllocation:
        return run_serial(profile, self.order, self.quota)


@dataclass(frozen=True)
class SequentialDictatorQuota:
    policy: DictatorPolicy
    quota: Quota

    kind = "sequential"

    @property
    def total(self) -> int:
        return self.quota.total

    def validate(self, n: int, m: int) -> None:
        validate(self.quota, n, m)
        if not 0 <= self.policy.first < n:
            raise ValidationError("first dictator is outside the agent set")

    def __call__(self, profile: LexProfile) -> DetAllocation:
        return run_sequential(profile, self.policy, self.quota)


@dataclass(frozen=True)
class Interleaving:
    sequence: PickingSequence

    kind = "interleave"

    @property
    def total(self) -> int:
        return len(self.sequence)

    def validate(self, n: int, m: int) -> None:
        if len(self.sequence) > m:
            raise ValidationError("picking sequence is longer than the number of objects")
        if any(a >= n for a in self.sequence):
            raise ValidationError("picking sequence names agents outside the agent set")

    def __call__(self, profile: LexProfile) -> DetAllocation:
        return run_interleaving(profile, self.sequence)


@dataclass(frozen=True)
class BossyFixture:
    """Dictator order chosen from the first dictator's *reported preference*.

    Agent 0 picks first.  If its report is the canonical order
    ``0 > 1 > ... > m-1`` the remaining positions go to agents 1, 2, ...
    in ascending order.  Otherwise, with ``branch="reverse"``, they go in
    descending order; with ``branch="drop"`` the last position is left
    unserved.  With three agents, four objects and quota (2, 1, 1) the
    reverse branch is the classic bossy example: reporting
    ``b > a > c > d`` keeps agent 0's bundle ``{a, b}`` but swaps who of
    agents 1 and 2 picks next.  The reverse branch needs ``n >= 3`` to be
    bossy; the drop branch is bossy already for two agents.
    """

    quota: Quota = Quota((2, 1, 1))
    branch: str = "reverse"

    kind = "bossy"

    def __post_init__(self):
        if self.branch not in ("reverse", "drop"):
            raise ValidationError(f"unknown bossy branch {self.branch!r}")

    @property
    def total(self) -> int:
        return self.quota.total

    def validate(self, n: int, m: int) -> None:
        validate(self.quota, n, m)
        if len(self.quota) < 2:
            raise ValidationError("the bossy fixture needs at least two quota positions")

    def order_for(self, profile: LexProfile) -> Ordering:
        k = len(self.quota)
        rest = list(range(1, profile.n))
        canonical = profile[0].ranking == tuple(range(profile.m))
        if canonical:
            return (0, *rest[: k - 1])
        if self.branch == "reverse":
            return (0, *rest[::-1][: k - 1])
        return (0, *rest[: k - 2])

    def __call__(self, profile: LexProfile) -> DetAllocation:
        order = self.order_for(profile)
        return run_serial(profile, order, Quota(self.quota.sizes[: len(order)]))


@dataclass(frozen=True)
class Imposed:
    """Returns the same allocation at every profile."""

    allocation: DetAllocation

    kind = "imposed"

    @property
    def total(self) -> int:
        return self.allocation.size

    def validate(self, n: int, m: int) -> None:
        if self.allocation.n != n:
            raise ValidationError("imposed allocation has the wrong number of agents")
        self.allocation.check_objects(m)

    def __call__(self, profile: LexProfile) -> DetAllocation:
        _validate_space(profile, self.allocation.n, None)
        return self.allocation


MechanismSpec = SerialDictatorQuota | SequentialDictatorQuota | Interleaving | BossyFixture | Imposed
