"""Random serial dictatorship with quotas (RSDQ) and lottery comparisons.

``rsdq_exact`` enumerates every injective sequence of ``|q|`` agents,
runs the serial mechanism for each, and averages with exact rationals.
``rsdq_sample`` is a seeded Monte Carlo estimator for instances past the
enumeration cap.  The remaining functions compare marginal rows under the
downward-lexicographic relation and first-order stochastic dominance.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import (
    Comparison,
    DetAllocation,
    LexOrder,
    LexProfile,
    Quota,
    RandAllocation,
    ValidationError,
    validate,
)
from .mechanisms import Ordering, SerialDictatorQuota, run_serial
from .space import DEFAULT_MAX_PROFILES, OutcomeTable, ProfileSpace

DEFAULT_ENUMERATION_CAP = 10**7


class EnumerationCapExceeded(ValueError):
    """Exact enumeration would visit more orderings than allowed."""


@dataclass(frozen=True)
class LotterySupport:
    """The orderings behind an exact RSDQ lottery, each with its outcome and weight."""

    entries: tuple[tuple[Ordering, DetAllocation, Fraction], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def problems(self, profile: LexProfile, quota: Quota) -> list[str]:
        out = []
        expected = Fraction(1, math.perm(profile.n, len(quota)))
        if sum(w for _, _, w in self.entries) != 1:
            out.append("weights do not sum to 1")
        if any(w != expected for _, _, w in self.entries):
            out.append(f"some weight differs from {expected}")
        for order, alloc, _ in self.entries:
            if run_serial(profile, order, quota) != alloc:
                out.append(f"ordering {order} does not reproduce its allocation")
        return out


def _check_cap(n: int, k: int, cap: int) -> int:
    count = math.perm(n, k)
    if count > cap:
        raise EnumerationCapExceeded(
            f"{count} orderings exceed the exact enumeration cap of {cap}; use rsdq_sample instead"
        )
    return count


def rsdq_exact(
    profile: LexProfile, quota: Quota, cap: int = DEFAULT_ENUMERATION_CAP
) -> tuple[RandAllocation, LotterySupport]:
    """Exact RSDQ marginals and the lottery that produces them."""
    n, m = profile.n, profile.m
    validate(quota, n, m)
    count = _check_cap(n, len(quota), cap)
    weight = Fraction(1, count)
    counts = [[0] * m for _ in range(n)]
    entries = []
    for order in itertools.permutations(range(n), len(quota)):
        alloc = run_serial(profile, order, quota)
        for agent, bundle in enumerate(alloc):
            row = counts[agent]
            for o in bundle:
                row[o] += 1
        entries.append((order, alloc, weight))
    matrix = RandAllocation(tuple(tuple(Fraction(c, count) for c in row) for row in counts))
    return matrix, LotterySupport(tuple(entries))


def rsdq_sample(profile: LexProfile, quota: Quota, trials: int, seed: int) -> np.ndarray:
    """Empirical RSDQ marginals from ``trials`` uniformly drawn orderings.

    The same ``(profile, quota, trials, seed)`` always gives the same array.
    """
    n, m = profile.n, profile.m
    validate(quota, n, m)
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    k = len(quota)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    draws = rng.permuted(np.tile(np.arange(n), (trials, 1)), axis=1)[:, :k]
    tally = Counter(map(tuple, draws.tolist()))
    counts = np.zeros((n, m), dtype=np.int64)
    for order in sorted(tally):
        alloc = run_serial(profile, order, quota)
        for agent, bundle in enumerate(alloc):
            for o in bundle:
                counts[agent, o] += tally[order]
    return counts / trials


# ---------------------------------------------------------------------------
# comparisons


def ld_prefers(pref: LexOrder, row_a: Sequence, row_b: Sequence) -> Comparison:
    """Downward-lexicographic comparison of two probability rows."""
    if len(row_a) != pref.m or len(row_b) != pref.m:
        raise ValidationError("rows must have one entry per object")
    for o in pref.ranking:
        if row_a[o] != row_b[o]:
            return Comparison.A_WINS if row_a[o] > row_b[o] else Comparison.B_WINS
    return Comparison.EQUAL


def _check_shapes(a: RandAllocation, b: RandAllocation | None, profile: LexProfile) -> None:
    if (a.n, a.m) != (profile.n, profile.m) or (b is not None and (b.n, b.m) != (a.n, a.m)):
        raise ValidationError("matrix shapes do not match the profile")


def ld_dominates(a: RandAllocation, b: RandAllocation, profile: LexProfile) -> bool:
    """True iff no agent downward-lexicographically prefers its row in ``b``."""
    _check_shapes(a, b, profile)
    return all(ld_prefers(pref, a[i], b[i]) is not Comparison.B_WINS for i, pref in enumerate(profile))


def prefix_sums(pref: LexOrder, row: Sequence) -> list:
    sums, acc = [], 0
    for o in pref.ranking:
        acc += row[o]
        sums.append(acc)
    return sums


def sd_dominates(a: RandAllocation, b: RandAllocation, profile: LexProfile) -> bool:
    """First-order stochastic dominance of ``a`` over ``b``, strict for some agent."""
    _check_shapes(a, b, profile)
    strict = False
    for i, pref in enumerate(profile):
        for sa, sb in zip(prefix_sums(pref, a[i]), prefix_sums(pref, b[i])):
            if sa < sb:
                return False
            strict = strict or sa > sb
    return strict


def envy_witnesses(a: RandAllocation, profile: LexProfile) -> list[tuple[int, int, int]]:
    """(envious agent, envied agent, pivotal object) for every envious pair."""
    _check_shapes(a, None, profile)
    out = []
    for i, pref in enumerate(profile):
        for j in range(a.n):
            if i == j or ld_prefers(pref, a[j], a[i]) is not Comparison.A_WINS:
                continue
            pivot = next(o for o in pref.ranking if a[j][o] != a[i][o])
            out.append((i, j, pivot))
    return out


def equal_treatment_witnesses(a: RandAllocation, profile: LexProfile) -> list[tuple[int, int]]:
    _check_shapes(a, None, profile)
    return [
        (i, j)
        for i, j in itertools.combinations(range(profile.n), 2)
        if profile[i] == profile[j] and a[i] != a[j]
    ]


@dataclass(frozen=True)
class LotteryManipulation:
    """A misreport after which the agent ld-prefers its RSDQ row."""

    agent: int
    profile: LexProfile
    misreport: LexOrder
    truthful_row: tuple[Fraction, ...]
    manipulated_row: tuple[Fraction, ...]

    def verify(self, quota: Quota) -> bool:
        truth, _ = rsdq_exact(self.profile, quota)
        lie, _ = rsdq_exact(self.profile.replace(self.agent, self.misreport), quota)
        return (
            truth[self.agent] == self.truthful_row
            and lie[self.agent] == self.manipulated_row
            and ld_prefers(self.profile[self.agent], lie[self.agent], truth[self.agent]) is Comparison.A_WINS
        )


def ld_manipulation(profile: LexProfile, quota: Quota) -> LotteryManipulation | None:
    """First (agent, misreport) whose RSDQ row the agent ld-prefers to its truthful row."""
    truthful, _ = rsdq_exact(profile, quota)
    for i, pref in enumerate(profile):
        for ranking in itertools.permutations(range(profile.m)):
            report = LexOrder(ranking)
            if report == pref:
                continue
            lie, _ = rsdq_exact(profile.replace(i, report), quota)
            if ld_prefers(pref, lie[i], truthful[i]) is Comparison.A_WINS:
                return LotteryManipulation(i, profile, report, truthful[i], lie[i])
    return None


def rsdq_count_table(n: int, m: int, quota: Quota, max_profiles: int = DEFAULT_MAX_PROFILES):
    """RSDQ numerators at every profile of the (n, m) space.

    Returns ``(table_space, counts, denominator)`` with ``counts`` of shape
    ``(P, n, m)``; entry ``counts[p, i, o] / denominator`` is the
    probability that agent ``i`` receives ``o`` at profile ``p``.
    """
    validate(quota, n, m)
    space = ProfileSpace(n, m, max_profiles)
    bits = (np.arange(1 << m)[:, None] >> np.arange(m)[None, :]) & 1
    counts = np.zeros((space.size, n, m), dtype=np.int64)
    denominator = 0
    for order in itertools.permutations(range(n), len(quota)):
        table = OutcomeTable.build(SerialDictatorQuota(order, quota), n, m, max_profiles)
        counts += bits[table.masks]
        denominator += 1
    return space, counts, denominator


def ld_manipulation_in_counts(space: ProfileSpace, counts: np.ndarray, denominator: int) -> LotteryManipulation | None:
    """Vectorised :func:`ld_manipulation` over a whole count table."""
    rankings = np.array([o.ranking for o in space.orders], dtype=np.int64)
    best = None
    for i in range(space.n):
        idx = space.report_indices(i)
        cols = rankings[space.digits[:, i]]  # (P, m) objects in true-preference order
        truth = np.take_along_axis(counts[:, i, :], cols, axis=1)
        lie = np.take_along_axis(counts[idx, i, :], cols[:, None, :], axis=2)
        diff = lie - truth[:, None, :]
        nz = diff != 0
        first = np.argmax(nz, axis=2)
        lead = np.take_along_axis(diff, first[..., None], axis=2)[..., 0]
        hits = nz.any(axis=2) & (lead > 0)
        flat = np.flatnonzero(hits)
        if flat.size:
            p, r = divmod(int(flat[0]), space.K)
            if best is None or p < best[1]:
                best = (i, p, r, int(idx[p, r]))
    if best is None:
        return None
    i, p, r, q = best
    row = lambda x: tuple(Fraction(int(c), denominator) for c in counts[x, i])  # noqa: E731
    return LotteryManipulation(i, space.profile(p), space.orders[r], row(p), row(q))


def envy_in_counts(space: ProfileSpace, counts: np.ndarray) -> tuple[int, int, int, int] | None:
    """First ``(profile index, envious, envied, pivot object)`` over a count table.

    Scans profiles in canonical order, then ordered agent pairs.
    """
    rankings = np.array([o.ranking for o in space.orders], dtype=np.int64)
    best = None
    for i in range(space.n):
        cols = rankings[space.digits[:, i]]
        own = np.take_along_axis(counts[:, i, :], cols, axis=1)
        for j in range(space.n):
            if i == j:
                continue
            other = np.take_along_axis(counts[:, j, :], cols, axis=1)
            diff = other - own
            nz = diff != 0
            first = np.argmax(nz, axis=1)
            lead = np.take_along_axis(diff, first[:, None], axis=1)[:, 0]
            hits = np.flatnonzero(nz.any(axis=1) & (lead > 0))
            if hits.size and (best is None or (int(hits[0]), i, j) < best[:3]):
                p = int(hits[0])
                best = (p, i, j, int(cols[p, first[p]]))
    return best


def ete_in_counts(space: ProfileSpace, counts: np.ndarray) -> tuple[int, int, int] | None:
    """First ``(profile index, i, j)`` with equal reports but different rows."""
    best = None
    for i, j in itertools.combinations(range(space.n), 2):
        same = space.digits[:, i] == space.digits[:, j]
        differ = (counts[:, i, :] != counts[:, j, :]).any(axis=1)
        hits = np.flatnonzero(same & differ)
        if hits.size and (best is None or (int(hits[0]), i, j) < best):
            best = (int(hits[0]), i, j)
    return best
