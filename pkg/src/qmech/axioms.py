"""Brute-force axiom audits with replayable witnesses.

Per-profile searches (``find_manipulation``, ``find_group_manipulation``,
``find_reallocation``, ``find_pareto_improvement``) call the mechanism
directly.  Whole-space searches evaluate the mechanism once per profile
into an :class:`~qmech.space.OutcomeTable` and then scan it with numpy;
when a caller passes an explicit profile list they fall back to the
direct scan.  Either way the reported witness is the smallest one in the
canonical order (profile index, then agent, then misreport or
permutation index).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .core import (
    Comparison,
    DetAllocation,
    GeneralSetPref,
    LexOrder,
    LexProfile,
    Quota,
    ValidationError,
    lex_compare,
    permute_objects,
)
from .mechanisms import Ordering, check_ordering, run_serial
from .space import DEFAULT_MAX_PROFILES, BudgetExceeded, OutcomeTable, ProfileSpace, mask_bundle

Mechanism = Callable[[LexProfile], DetAllocation]

MAX_LEX_PARETO_OBJECTS = 6
MAX_GENERAL_PARETO_OBJECTS = 5
MAX_MISREPORT_OBJECTS = 6


# ---------------------------------------------------------------------------
# witnesses


@dataclass(frozen=True)
class ManipulationWitness:
    agent: int
    profile: LexProfile
    misreport: LexOrder
    truthful_bundle: frozenset
    manipulated_bundle: frozenset

    def verify(self, mech: Mechanism) -> bool:
        truth = mech(self.profile)[self.agent]
        lie = mech(self.profile.replace(self.agent, self.misreport))[self.agent]
        return (
            truth == self.truthful_bundle
            and lie == self.manipulated_bundle
            and lex_compare(self.profile[self.agent], lie, truth) is Comparison.A_WINS
        )


@dataclass(frozen=True)
class BossinessWitness:
    agent: int
    profile: LexProfile
    misreport: LexOrder
    before: DetAllocation
    after: DetAllocation

    def verify(self, mech: Mechanism) -> bool:
        before = mech(self.profile)
        after = mech(self.profile.replace(self.agent, self.misreport))
        return (
            before == self.before
            and after == self.after
            and before[self.agent] == after[self.agent]
            and before != after
        )


@dataclass(frozen=True)
class NeutralityWitness:
    profile: LexProfile
    phi: tuple[int, ...]
    renamed_outcome: DetAllocation  # phi applied to the outcome at profile
    outcome_of_renamed: DetAllocation  # outcome at phi(profile)

    def verify(self, mech: Mechanism) -> bool:
        lhs = permute_objects(self.phi, mech(self.profile), self.profile.m)
        rhs = mech(permute_objects(self.phi, self.profile))
        return lhs == self.renamed_outcome and rhs == self.outcome_of_renamed and lhs != rhs


@dataclass(frozen=True)
class ParetoWitness:
    allocation: DetAllocation
    dominating: DetAllocation
    profile: LexProfile | None = None

    def verify(self, prefs=None) -> bool:
        prefs = self.profile if prefs is None else prefs
        return self.dominating.size == self.allocation.size and _dominates(
            prefs, self.dominating, self.allocation
        )


@dataclass(frozen=True)
class GroupWitness:
    coalition: tuple[int, ...]
    profile: LexProfile
    reports: tuple[LexOrder, ...]
    before: DetAllocation
    after: DetAllocation

    def reported_profile(self) -> LexProfile:
        return self.profile.replace_many(dict(zip(self.coalition, self.reports)))

    def verify(self, mech: Mechanism) -> bool:
        before = mech(self.profile)
        after = mech(self.reported_profile())
        return (
            before == self.before
            and after == self.after
            and _improves(self.profile, self.coalition, before, after)
        )


@dataclass(frozen=True)
class ReallocationWitness:
    coalition: tuple[int, ...]
    profile: LexProfile
    reports: tuple[LexOrder, ...]
    before: DetAllocation
    reported: DetAllocation  # outcome under the coalition's joint report
    redistributed: DetAllocation  # after the coalition pools and re-splits its objects

    def reported_profile(self) -> LexProfile:
        return self.profile.replace_many(dict(zip(self.coalition, self.reports)))

    def verify(self, mech: Mechanism) -> bool:
        before = mech(self.profile)
        reported = mech(self.reported_profile())
        pool = frozenset().union(*(reported[a] for a in self.coalition))
        got = frozenset().union(*(self.redistributed[a] for a in self.coalition))
        outsiders_kept = all(
            self.redistributed[a] == reported[a] for a in range(self.profile.n) if a not in self.coalition
        )
        return (
            before == self.before
            and reported == self.reported
            and pool == got
            and outsiders_kept
            and _improves(self.profile, self.coalition, before, self.redistributed)
        )


# ---------------------------------------------------------------------------
# helpers


def _weight_fn(prefs) -> tuple[Callable[[int, frozenset], int], int]:
    if isinstance(prefs, LexProfile):
        return (lambda i, b: prefs[i].weight(b)), prefs.m
    prefs = tuple(prefs)
    if not prefs or not all(isinstance(p, GeneralSetPref) for p in prefs):
        raise ValidationError("expected a LexProfile or a sequence of GeneralSetPref")
    return (lambda i, b: prefs[i].weight(b)), prefs[0].m


def _dominates(prefs, a: DetAllocation, b: DetAllocation) -> bool:
    weight, _ = _weight_fn(prefs)
    diffs = [weight(i, a[i]) - weight(i, b[i]) for i in range(len(b))]
    return all(d >= 0 for d in diffs) and any(d > 0 for d in diffs)


def _improves(profile: LexProfile, coalition: Sequence[int], before: DetAllocation, after: DetAllocation) -> bool:
    """Every member weakly better off, at least one strictly."""
    strict = False
    for a in coalition:
        c = lex_compare(profile[a], after[a], before[a])
        if c is Comparison.B_WINS:
            return False
        strict = strict or c is Comparison.A_WINS
    return strict


def _orders(m: int) -> list[LexOrder]:
    if m > MAX_MISREPORT_OBJECTS:
        raise BudgetExceeded(f"misreport enumeration is limited to m <= {MAX_MISREPORT_OBJECTS}")
    return [LexOrder(r) for r in itertools.permutations(range(m))]


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


def allocations_with_total(n: int, m: int, total: int) -> Iterator[DetAllocation]:
    """Every allocation handing out exactly ``total`` objects.

    Enumerated by per-agent bundle sizes (compositions of ``total``), then by
    bundles in combination order.
    """

    def fill(sizes, remaining):
        if not sizes:
            yield ()
            return
        for bundle in itertools.combinations(sorted(remaining), sizes[0]):
            for rest in fill(sizes[1:], remaining - set(bundle)):
                yield (frozenset(bundle), *rest)

    if total > m:
        return
    for sizes in _compositions(total, n):
        for bundles in fill(sizes, set(range(m))):
            yield DetAllocation(bundles)


# ---------------------------------------------------------------------------
# Pareto C-efficiency


def find_pareto_improvement(
    alloc: DetAllocation, prefs, total: int | None = None
) -> ParetoWitness | None:
    """A same-size allocation Pareto-dominating ``alloc``, or None.

    ``prefs`` is a :class:`LexProfile` or one :class:`GeneralSetPref` per agent.
    """
    weight, m = _weight_fn(prefs)
    limit = MAX_LEX_PARETO_OBJECTS if isinstance(prefs, LexProfile) else MAX_GENERAL_PARETO_OBJECTS
    if m > limit:
        raise BudgetExceeded(f"Pareto enumeration is limited to m <= {limit} for these preferences")
    total = alloc.size if total is None else total
    if alloc.size != total:
        raise ValidationError(f"allocation assigns {alloc.size} objects, expected {total}")
    current = [weight(i, b) for i, b in enumerate(alloc)]
    for cand in allocations_with_total(alloc.n, m, total):
        strict = False
        for i, b in enumerate(cand):
            w = weight(i, b)
            if w < current[i]:
                break
            strict = strict or w > current[i]
        else:
            if strict:
                return ParetoWitness(alloc, cand, prefs if isinstance(prefs, LexProfile) else None)
    return None


def pareto_c_efficient(alloc: DetAllocation, prefs, total: int | None = None) -> bool:
    return find_pareto_improvement(alloc, prefs, total) is None


# ---------------------------------------------------------------------------
# strategyproofness and non-bossiness


def find_manipulation(mech: Mechanism, profile: LexProfile) -> ManipulationWitness | None:
    """First agent and misreport that strictly improve the agent's own bundle."""
    orders = _orders(profile.m)
    outcome = mech(profile)
    for i, truth in enumerate(profile):
        for report in orders:
            if report == truth:
                continue
            bundle = mech(profile.replace(i, report))[i]
            if lex_compare(truth, bundle, outcome[i]) is Comparison.A_WINS:
                return ManipulationWitness(i, profile, report, outcome[i], bundle)
    return None


def _first_hit(hits: np.ndarray) -> tuple[int, int] | None:
    """Row-major first True of a 2-D boolean array."""
    flat = np.flatnonzero(hits)
    if flat.size == 0:
        return None
    return divmod(int(flat[0]), hits.shape[1])


def scan_manipulation(
    mech: Mechanism,
    n: int,
    m: int,
    profiles: Iterable[LexProfile] | None = None,
    max_profiles: int = DEFAULT_MAX_PROFILES,
) -> ManipulationWitness | None:
    """First manipulation over every profile (or over ``profiles``)."""
    if profiles is not None:
        for p in profiles:
            w = find_manipulation(mech, p)
            if w is not None:
                return w
        return None
    table = OutcomeTable.build(mech, n, m, max_profiles)
    return manipulation_in_table(table)


def manipulation_in_table(table: OutcomeTable) -> ManipulationWitness | None:
    sp, masks = table.space, table.masks
    best = None
    for i in range(sp.n):
        idx = table.report_indices(i)
        true_k = sp.digits[:, i]
        lie = sp.weights[true_k[:, None], masks[idx, i]]
        truth = sp.weights[true_k, masks[:, i]]
        hit = _first_hit(lie > truth[:, None])
        if hit is not None and (best is None or hit[0] < best[1][0]):
            best = (i, hit)
    if best is None:
        return None
    i, (p, r) = best
    profile = sp.profile(p)
    return ManipulationWitness(
        i, profile, sp.orders[r], mask_bundle(masks[p, i]), mask_bundle(masks[table.report_indices(i)[p, r], i])
    )


def _bossy_at(mech: Mechanism, profile: LexProfile, orders: list[LexOrder]) -> BossinessWitness | None:
    before = mech(profile)
    for i, truth in enumerate(profile):
        for report in orders:
            if report == truth:
                continue
            after = mech(profile.replace(i, report))
            if after[i] == before[i] and after != before:
                return BossinessWitness(i, profile, report, before, after)
    return None


def find_bossiness(
    mech: Mechanism,
    n: int,
    m: int,
    profiles: Iterable[LexProfile] | None = None,
    max_profiles: int = DEFAULT_MAX_PROFILES,
) -> BossinessWitness | None:
    """A misreport that keeps the agent's bundle but changes someone else's."""
    if profiles is not None:
        orders = _orders(m)
        for p in profiles:
            w = _bossy_at(mech, p, orders)
            if w is not None:
                return w
        return None
    return bossiness_in_table(OutcomeTable.build(mech, n, m, max_profiles))


def bossiness_in_table(table: OutcomeTable) -> BossinessWitness | None:
    sp, masks = table.space, table.masks
    best = None
    for i in range(sp.n):
        idx = table.report_indices(i)
        after = masks[idx]  # (P, K, n)
        same_own = after[:, :, i] == masks[:, None, i]
        changed = (after != masks[:, None, :]).any(axis=2)
        hit = _first_hit(same_own & changed)
        if hit is not None and (best is None or hit[0] < best[1][0]):
            best = (i, hit)
    if best is None:
        return None
    i, (p, r) = best
    return BossinessWitness(
        i, sp.profile(p), sp.orders[r], table.allocation(p), table.allocation(int(table.report_indices(i)[p, r]))
    )


# ---------------------------------------------------------------------------
# neutrality


def find_neutrality_violation(
    mech: Mechanism,
    n: int,
    m: int,
    profiles: Iterable[LexProfile] | None = None,
    phis: Sequence[Sequence[int]] | None = None,
    max_profiles: int = DEFAULT_MAX_PROFILES,
) -> NeutralityWitness | None:
    """A profile and object renaming with ``phi(mech(p)) != mech(phi(p))``."""
    if profiles is None and phis is None:
        return neutrality_in_table(OutcomeTable.build(mech, n, m, max_profiles))
    if phis is None:
        phis = list(itertools.permutations(range(m)))
    phis = [tuple(phi) for phi in phis]
    if profiles is None:
        profiles = ProfileSpace(n, m, max_profiles)
    for p in profiles:
        outcome = mech(p)
        for phi in phis:
            lhs = permute_objects(phi, outcome, m)
            rhs = mech(permute_objects(phi, p))
            if lhs != rhs:
                return NeutralityWitness(p, phi, lhs, rhs)
    return None


def neutrality_in_table(table: OutcomeTable) -> NeutralityWitness | None:
    sp, masks = table.space, table.masks
    best = None
    for f in range(sp.K):
        renamed = sp.order_action[f][sp.digits]  # (P, n)
        ridx = renamed @ sp.place
        lhs = sp.mask_action[f][masks]
        rhs = masks[ridx]
        bad = np.flatnonzero((lhs != rhs).any(axis=1))
        if bad.size and (best is None or bad[0] < best[0]):
            best = (int(bad[0]), f, int(ridx[bad[0]]))
    if best is None:
        return None
    p, f, rp = best
    phi = sp.orders[f].ranking
    lhs = DetAllocation(tuple(mask_bundle(x) for x in sp.mask_action[f][masks[p]]))
    return NeutralityWitness(sp.profile(p), phi, lhs, table.allocation(rp))


# ---------------------------------------------------------------------------
# Pareto over a whole space


def scan_pareto(
    mech: Mechanism,
    n: int,
    m: int,
    profiles: Iterable[LexProfile] | None = None,
    max_profiles: int = DEFAULT_MAX_PROFILES,
) -> ParetoWitness | None:
    """First profile whose outcome is Pareto-dominated among same-size allocations."""
    if profiles is not None:
        for p in profiles:
            w = find_pareto_improvement(mech(p), p)
            if w is not None:
                return w
        return None
    return pareto_in_table(OutcomeTable.build(mech, n, m, max_profiles))


def pareto_in_table(table: OutcomeTable) -> ParetoWitness | None:
    sp, masks = table.space, table.masks
    if sp.m > MAX_LEX_PARETO_OBJECTS:
        raise BudgetExceeded(f"Pareto enumeration is limited to m <= {MAX_LEX_PARETO_OBJECTS}")
    popcount = np.array([bin(x).count("1") for x in range(1 << sp.m)])
    totals = popcount[masks].sum(axis=1)
    best = None
    for total in np.unique(totals):
        rows = np.flatnonzero(totals == total)
        cands = list(allocations_with_total(sp.n, sp.m, int(total)))
        cmask = np.array([[sum(1 << o for o in b) for b in c] for c in cands], dtype=np.int64)
        geq = np.ones((rows.size, len(cands)), dtype=bool)
        gt = np.zeros((rows.size, len(cands)), dtype=bool)
        for i in range(sp.n):
            k = sp.digits[rows, i]
            cw = sp.weights[k[:, None], cmask[None, :, i]]
            cur = sp.weights[k, masks[rows, i]][:, None]
            geq &= cw >= cur
            gt |= cw > cur
        hit = _first_hit(geq & gt)
        if hit is not None:
            p = int(rows[hit[0]])
            if best is None or p < best[0]:
                best = (p, cands[hit[1]])
    if best is None:
        return None
    p, cand = best
    return ParetoWitness(table.allocation(p), cand, sp.profile(p))


# ---------------------------------------------------------------------------
# coalitions


def _coalitions(n: int, max_size: int) -> Iterator[tuple[int, ...]]:
    for size in range(1, min(max_size, n) + 1):
        yield from itertools.combinations(range(n), size)


def find_group_manipulation(mech: Mechanism, profile: LexProfile, max_coalition: int) -> GroupWitness | None:
    """Coalition and joint misreport leaving every member weakly better, one strictly."""
    orders = _orders(profile.m)
    before = mech(profile)
    for coalition in _coalitions(profile.n, max_coalition):
        truth = tuple(profile[a] for a in coalition)
        for reports in itertools.product(orders, repeat=len(coalition)):
            if reports == truth:
                continue
            after = mech(profile.replace_many(dict(zip(coalition, reports))))
            if _improves(profile, coalition, before, after):
                return GroupWitness(coalition, profile, reports, before, after)
    return None


def group_in_table(
    table: OutcomeTable, max_coalition: int, max_pairs: int = 50_000_000
) -> GroupWitness | None:
    """Table-driven :func:`find_group_manipulation` over every profile."""
    sp, masks = table.space, table.masks
    coalitions = list(_coalitions(sp.n, max_coalition))
    pairs = sum(sp.size * sp.K ** len(c) for c in coalitions)
    if pairs > max_pairs:
        raise BudgetExceeded(f"{pairs} profile/joint-report pairs exceed the budget of {max_pairs}")
    truth_w = np.stack([sp.weights[sp.digits[:, i], masks[:, i]] for i in range(sp.n)], axis=1)
    best = None
    for rank, c in enumerate(coalitions):
        base = np.arange(sp.size, dtype=np.int64) - sp.digits[:, list(c)] @ sp.place[list(c)]
        reports = np.array(list(itertools.product(range(sp.K), repeat=len(c))), dtype=np.int64)
        idx = base[:, None] + (reports @ sp.place[list(c)])[None, :]  # (P, R)
        geq = np.ones(idx.shape, dtype=bool)
        gt = np.zeros(idx.shape, dtype=bool)
        for i in c:
            after = sp.weights[sp.digits[:, i][:, None], masks[idx, i]]
            geq &= after >= truth_w[:, i][:, None]
            gt |= after > truth_w[:, i][:, None]
        hit = _first_hit(geq & gt)
        if hit is not None and (best is None or hit[0] < best[0]):
            best = (hit[0], rank, hit[1])
    if best is None:
        return None
    p, rank, r = best
    c = coalitions[rank]
    digits = np.unravel_index(r, (sp.K,) * len(c))
    rep = tuple(sp.orders[int(k)] for k in digits)
    profile = sp.profile(p)
    after = table.allocation(sp.index(profile.replace_many(dict(zip(c, rep)))))
    return GroupWitness(c, profile, rep, table.allocation(p), after)


def _redistributions(coalition: Sequence[int], pool: frozenset) -> Iterator[dict[int, frozenset]]:
    objs = sorted(pool)
    for owners in itertools.product(coalition, repeat=len(objs)):
        split = {a: set() for a in coalition}
        for o, a in zip(objs, owners):
            split[a].add(o)
        yield {a: frozenset(b) for a, b in split.items()}


def find_reallocation(mech: Mechanism, profile: LexProfile, max_coalition: int) -> ReallocationWitness | None:
    """Joint misreport followed by re-splitting the coalition's pooled objects.

    The truthful joint report is included, so a pure ex post exchange also
    counts.  Objects are redistributed individually; bundle sizes may change.
    """
    orders = _orders(profile.m)
    before = mech(profile)
    for coalition in _coalitions(profile.n, max_coalition):
        for reports in itertools.product(orders, repeat=len(coalition)):
            reported = mech(profile.replace_many(dict(zip(coalition, reports))))
            pool = frozenset().union(*(reported[a] for a in coalition))
            for split in _redistributions(coalition, pool):
                bundles = tuple(split.get(a, reported[a]) for a in range(profile.n))
                after = DetAllocation(bundles)
                if _improves(profile, coalition, before, after):
                    return ReallocationWitness(coalition, profile, tuple(reports), before, reported, after)
    return None


# ---------------------------------------------------------------------------
# structure recovery


def infer_serial_structure(mech: Mechanism, n: int, m: int, quota: Quota) -> Ordering | None:
    """Read a dictator ordering off the outcome at the identical canonical profile.

    Returns the ordering when the served agents' bundles are consecutive
    blocks of the common ranking whose sizes, top block first, equal the
    quota; None otherwise.
    """
    profile = LexProfile.identical(LexOrder(tuple(range(m))), n)
    alloc = mech(profile)
    served = sorted((a for a in range(n) if alloc[a]), key=lambda a: min(alloc[a]))
    start = 0
    for a in served:
        size = len(alloc[a])
        if alloc[a] != frozenset(range(start, start + size)):
            return None
        start += size
    if tuple(len(alloc[a]) for a in served) != quota.sizes:
        return None
    return tuple(served)


def serial_counterexample(
    mech: Mechanism,
    order: Sequence[int],
    quota: Quota,
    n: int,
    m: int,
    max_profiles: int = DEFAULT_MAX_PROFILES,
) -> LexProfile | None:
    """First profile where ``mech`` differs from serial dictatorship with (order, quota)."""
    order = check_ordering(order, n, quota)
    for p in ProfileSpace(n, m, max_profiles):
        if mech(p) != run_serial(p, order, quota):
            return p
    return None


def verify_serial_equivalence(
    mech: Mechanism,
    order: Sequence[int],
    quota: Quota,
    n: int,
    m: int,
    max_profiles: int = DEFAULT_MAX_PROFILES,
) -> bool:
    return serial_counterexample(mech, order, quota, n, m, max_profiles) is None


def sample_profiles(n: int, m: int, count: int, seed: int) -> list[LexProfile]:
    """``count`` uniformly random lexicographic profiles from a seeded generator."""
    rng = np.random.default_rng(seed)
    return [
        LexProfile(tuple(LexOrder(tuple(int(x) for x in rng.permutation(m))) for _ in range(n)))
        for _ in range(count)
    ]
