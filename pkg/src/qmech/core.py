"""Domain model: objects, agents, lexicographic preferences, quotas, allocations.

Objects and agents are dense integer indices (``0..m-1`` and ``0..n-1``).
Display labels live in :class:`Names` and never affect semantics.

A lexicographic order over objects induces a strict order over bundles:
between two distinct bundles the winner is the one holding the best object
of their symmetric difference.  Equivalently, a bundle's *weight*
``sum(2 ** (m - 1 - rank(o)))`` orders bundles as plain integers, which is
what the vectorised audits use.
"""

from __future__ import annotations

import enum
import itertools
import string
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

Bundle = frozenset  # frozenset[int]

MAX_GENERAL_OBJECTS = 5


class ValidationError(ValueError):
    """Raised when an instance, quota or preference is malformed."""


class InfeasibleError(ValidationError):
    """Raised when a request cannot be met with the available objects."""


class Comparison(enum.Enum):
    A_WINS = "A"
    B_WINS = "B"
    EQUAL = "Equal"


def default_object_labels(m: int) -> tuple[str, ...]:
    if m <= 26:
        return tuple(string.ascii_lowercase[:m])
    return tuple(f"o{j + 1}" for j in range(m))


def default_agent_labels(n: int) -> tuple[str, ...]:
    return tuple(str(i + 1) for i in range(n))


@dataclass(frozen=True)
class Names:
    """Display labels for agents and objects (cosmetic only)."""

    agents: tuple[str, ...]
    objects: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.agents)) != len(self.agents):
            raise ValidationError("agent labels must be unique")
        if len(set(self.objects)) != len(self.objects):
            raise ValidationError("object labels must be unique")

    @classmethod
    def default(cls, n: int, m: int) -> Names:
        return cls(default_agent_labels(n), default_object_labels(m))

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def m(self) -> int:
        return len(self.objects)

    def agent_index(self, label) -> int:
        try:
            return self.agents.index(str(label))
        except ValueError:
            raise ValidationError(f"unknown agent {label!r}") from None

    def object_index(self, label) -> int:
        try:
            return self.objects.index(str(label))
        except ValueError:
            raise ValidationError(f"unknown object {label!r}") from None

    def bundle_labels(self, bundle: Iterable[int]) -> list[str]:
        return [self.objects[o] for o in sorted(bundle)]


# ---------------------------------------------------------------------------
# preferences


@dataclass(frozen=True)
class LexOrder:
    """A strict ranking of all ``m`` objects, most preferred first."""

    ranking: tuple[int, ...]
    _rank: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ranking = tuple(int(o) for o in self.ranking)
        if sorted(ranking) != list(range(len(ranking))):
            raise ValidationError(f"ranking {ranking} is not a permutation of 0..{len(ranking) - 1}")
        object.__setattr__(self, "ranking", ranking)
        rank = [0] * len(ranking)
        for pos, o in enumerate(ranking):
            rank[o] = pos
        object.__setattr__(self, "_rank", tuple(rank))

    @classmethod
    def parse(cls, text: str, names: Names | None = None) -> LexOrder:
        """Parse ``"cabd"``, ``"c>a>b>d"`` or ``"c a b d"`` into an order."""
        tokens = [t for t in text.replace(">", " ").replace(",", " ").split()]
        if len(tokens) == 1 and names is None:
            tokens = list(tokens[0])
        if names is None:
            names = Names.default(1, len(tokens))
        return cls(tuple(names.object_index(t) for t in tokens))

    @property
    def m(self) -> int:
        return len(self.ranking)

    def rank(self, obj: int) -> int:
        """Position of ``obj`` (0 = best)."""
        return self._rank[obj]

    def weight(self, bundle: Iterable[int]) -> int:
        """Integer key whose natural order is the lexicographic bundle order."""
        m = len(self.ranking)
        return sum(1 << (m - 1 - self._rank[o]) for o in bundle)

    def sorted(self, objs: Iterable[int]) -> list[int]:
        return sorted(objs, key=self._rank.__getitem__)

    def __iter__(self) -> Iterator[int]:
        return iter(self.ranking)

    def __len__(self) -> int:
        return len(self.ranking)


@dataclass(frozen=True)
class LexProfile:
    """One :class:`LexOrder` per agent."""

    prefs: tuple[LexOrder, ...]

    def __post_init__(self):
        prefs = tuple(p if isinstance(p, LexOrder) else LexOrder(tuple(p)) for p in self.prefs)
        if not prefs:
            raise ValidationError("a profile needs at least one agent")
        if len({p.m for p in prefs}) != 1:
            raise ValidationError("all preferences must rank the same object set")
        object.__setattr__(self, "prefs", prefs)

    @classmethod
    def parse(cls, rows: Sequence[str], names: Names | None = None) -> LexProfile:
        return cls(tuple(LexOrder.parse(r, names) for r in rows))

    @classmethod
    def identical(cls, order: LexOrder, n: int) -> LexProfile:
        return cls((order,) * n)

    @property
    def n(self) -> int:
        return len(self.prefs)

    @property
    def m(self) -> int:
        return self.prefs[0].m

    def replace(self, agent: int, order: LexOrder) -> LexProfile:
        prefs = list(self.prefs)
        prefs[agent] = order
        return LexProfile(tuple(prefs))

    def replace_many(self, reports: dict[int, LexOrder]) -> LexProfile:
        prefs = list(self.prefs)
        for agent, order in reports.items():
            prefs[agent] = order
        return LexProfile(tuple(prefs))

    def __getitem__(self, agent: int) -> LexOrder:
        return self.prefs[agent]

    def __iter__(self) -> Iterator[LexOrder]:
        return iter(self.prefs)

    def __len__(self) -> int:
        return len(self.prefs)


def all_subsets(objs: Sequence[int]) -> list[frozenset]:
    out = []
    for k in range(len(objs) + 1):
        out.extend(frozenset(c) for c in itertools.combinations(objs, k))
    return out


@dataclass(frozen=True)
class GeneralSetPref:
    """An explicit strict order over all ``2**m`` bundles (``m <= 5``)."""

    ranking: tuple[frozenset, ...]
    m: int
    _pos: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m > MAX_GENERAL_OBJECTS:
            raise ValidationError(f"general set preferences are limited to m <= {MAX_GENERAL_OBJECTS}")
        ranking = tuple(frozenset(s) for s in self.ranking)
        expected = set(all_subsets(range(self.m)))
        if len(ranking) != len(expected) or set(ranking) != expected:
            raise ValidationError("a general preference must rank every subset exactly once")
        object.__setattr__(self, "ranking", ranking)
        object.__setattr__(self, "_pos", {s: i for i, s in enumerate(ranking)})

    def weight(self, bundle: Iterable[int]) -> int:
        """Higher is better, comparable with ``LexOrder.weight`` semantics."""
        return len(self.ranking) - 1 - self._pos[frozenset(bundle)]

    def prefers(self, a: Iterable[int], b: Iterable[int]) -> bool:
        return self.weight(a) > self.weight(b)


def preference_weight(pref: LexOrder | GeneralSetPref, bundle: Iterable[int]) -> int:
    return pref.weight(bundle)


# ---------------------------------------------------------------------------
# quotas and allocations


@dataclass(frozen=True)
class Quota:
    """Positional bundle sizes: the i-th dictator position receives ``sizes[i]`` objects."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def __len__(self) -> int:
        return len(self.sizes)

    def __iter__(self) -> Iterator[int]:
        return iter(self.sizes)

    def __getitem__(self, i: int) -> int:
        return self.sizes[i]


def quota_problems(quota: Quota, n: int, m: int) -> list[str]:
    """Every violated constraint, one message each; empty when valid."""
    problems = []
    if len(quota) == 0:
        problems.append("quota must serve at least one position")
    if len(quota) > n:
        problems.append(f"quota serves {len(quota)} positions but there are only {n} agents")
    bad = [q for q in quota if q < 1]
    if bad:
        problems.append(f"quota entries must be >= 1, got {bad}")
    if quota.total > m:
        problems.append(f"quota total {quota.total} exceeds the {m} available objects")
    return problems


def validate(quota: Quota, n: int, m: int) -> None:
    problems = quota_problems(quota, n, m)
    if problems:
        raise ValidationError("; ".join(problems))


def valid_quotas(n: int, m: int) -> list[Quota]:
    """All quotas with ``|q| <= n`` and ``sum(q) <= m``, in a fixed order."""
    out = []

    def rec(prefix, remaining):
        if prefix:
            out.append(Quota(tuple(prefix)))
        if len(prefix) == n:
            return
        for s in range(1, remaining + 1):
            rec(prefix + [s], remaining - s)

    rec([], m)
    return sorted(out, key=lambda q: (len(q), q.sizes))


@dataclass(frozen=True)
class DetAllocation:
    """Per-agent bundles; pairwise disjoint (free disposal allowed)."""

    bundles: tuple[frozenset, ...]

    def __post_init__(self):
        bundles = tuple(frozenset(int(o) for o in b) for b in self.bundles)
        seen: set[int] = set()
        for b in bundles:
            if seen & b:
                raise ValidationError(f"objects {sorted(seen & b)} assigned to more than one agent")
            seen |= b
        object.__setattr__(self, "bundles", bundles)

    @classmethod
    def empty(cls, n: int) -> DetAllocation:
        return cls((frozenset(),) * n)

    @property
    def n(self) -> int:
        return len(self.bundles)

    @property
    def assigned(self) -> frozenset:
        return frozenset().union(*self.bundles)

    @property
    def size(self) -> int:
        return sum(len(b) for b in self.bundles)

    def check_objects(self, m: int) -> None:
        if any(o < 0 or o >= m for o in self.assigned):
            raise ValidationError(f"allocation uses objects outside 0..{m - 1}")

    def __getitem__(self, agent: int) -> frozenset:
        return self.bundles[agent]

    def __iter__(self) -> Iterator[frozenset]:
        return iter(self.bundles)

    def __len__(self) -> int:
        return len(self.bundles)


@dataclass(frozen=True)
class RandAllocation:
    """An ``n x m`` matrix of exact marginal probabilities."""

    rows: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(Fraction(x) for x in r) for r in self.rows)
        if not rows or len({len(r) for r in rows}) != 1:
            raise ValidationError("random allocation must be a non-empty rectangular matrix")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_deterministic(cls, alloc: DetAllocation, m: int) -> RandAllocation:
        return cls(tuple(tuple(Fraction(int(j in b)) for j in range(m)) for b in alloc))

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def m(self) -> int:
        return len(self.rows[0])

    @property
    def total(self) -> Fraction:
        return sum((x for r in self.rows for x in r), Fraction(0))

    def column_sum(self, j: int) -> Fraction:
        return sum((r[j] for r in self.rows), Fraction(0))

    def problems(self, total: int | None = None) -> list[str]:
        out = []
        if any(x < 0 or x > 1 for r in self.rows for x in r):
            out.append("entries must lie in [0, 1]")
        over = [j for j in range(self.m) if self.column_sum(j) > 1]
        if over:
            out.append(f"columns {over} sum to more than 1")
        if total is not None and self.total != total:
            out.append(f"total mass {self.total} != {total}")
        return out

    def check(self, total: int | None = None) -> None:
        problems = self.problems(total)
        if problems:
            raise ValidationError("; ".join(problems))

    def __getitem__(self, agent: int) -> tuple[Fraction, ...]:
        return self.rows[agent]

    def __iter__(self):
        return iter(self.rows)


@dataclass(frozen=True)
class PickingSequence:
    """Turn order: ``turns[t]`` picks one object at turn ``t``."""

    turns: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(int(t) for t in self.turns))
        if any(t < 0 for t in self.turns):
            raise ValidationError("agent indices must be non-negative")

    @property
    def is_interleaving(self) -> bool:
        """Some agent picks both before and after a different agent."""
        return any(
            self.turns[i] == self.turns[k] and any(self.turns[j] != self.turns[i] for j in range(i + 1, k))
            for i in range(len(self.turns))
            for k in range(i + 2, len(self.turns))
        )

    def __len__(self) -> int:
        return len(self.turns)

    def __iter__(self) -> Iterator[int]:
        return iter(self.turns)


# ---------------------------------------------------------------------------
# operations


def _check_objects(m: int, *bundles: Iterable[int]) -> None:
    for b in bundles:
        for o in b:
            if not 0 <= o < m:
                raise ValidationError(f"object {o} is outside 0..{m - 1}")


def lex_compare(pref: LexOrder, a: Iterable[int], b: Iterable[int]) -> Comparison:
    """Compare two bundles under the lexicographic extension of ``pref``."""
    a, b = frozenset(a), frozenset(b)
    _check_objects(pref.m, a, b)
    diff = a ^ b
    if not diff:
        return Comparison.EQUAL
    best = min(diff, key=pref.rank)
    return Comparison.A_WINS if best in a else Comparison.B_WINS


def top_k(pref: LexOrder, available: Iterable[int], k: int) -> frozenset:
    """The ``k`` best objects of ``available``; the lex-maximal ``k``-subset."""
    available = frozenset(available)
    _check_objects(pref.m, available)
    if k > len(available):
        raise InfeasibleError(f"cannot take {k} objects from {len(available)} available")
    picked = []
    for o in pref.ranking:
        if len(picked) == k:
            break
        if o in available:
            picked.append(o)
    return frozenset(picked)


def general_top_k(pref: GeneralSetPref, available: Iterable[int], k: int) -> frozenset:
    available = frozenset(available)
    _check_objects(pref.m, available)
    if k > len(available):
        raise InfeasibleError(f"cannot take {k} objects from {len(available)} available")
    for s in pref.ranking:
        if len(s) == k and s <= available:
            return s
    raise AssertionError("unreachable: every k-subset is ranked")


def _check_phi(phi: Sequence[int], m: int) -> tuple[int, ...]:
    phi = tuple(int(x) for x in phi)
    if sorted(phi) != list(range(m)):
        raise ValidationError(f"{phi} is not a bijection on 0..{m - 1}")
    return phi


def invert(phi: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(phi)
    for o, image in enumerate(phi):
        inv[image] = o
    return tuple(inv)


def permute_objects(phi: Sequence[int], x, m: int | None = None):
    """Rename object ``o`` to ``phi[o]`` throughout ``x``.

    ``x`` may be a LexOrder, LexProfile, DetAllocation or RandAllocation.
    """
    if isinstance(x, LexOrder):
        phi = _check_phi(phi, x.m)
        return LexOrder(tuple(phi[o] for o in x.ranking))
    if isinstance(x, LexProfile):
        phi = _check_phi(phi, x.m)
        return LexProfile(tuple(LexOrder(tuple(phi[o] for o in p.ranking)) for p in x))
    if isinstance(x, RandAllocation):
        phi = _check_phi(phi, x.m)
        inv = invert(phi)
        return RandAllocation(tuple(tuple(r[inv[j]] for j in range(x.m)) for r in x.rows))
    if isinstance(x, DetAllocation):
        phi = _check_phi(phi, len(phi) if m is None else m)
        x.check_objects(len(phi))
        return DetAllocation(tuple(frozenset(phi[o] for o in b) for b in x))
    raise TypeError(f"cannot permute objects of {type(x).__name__}")
