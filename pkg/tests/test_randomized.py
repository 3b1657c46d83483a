import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmech import axioms
from qmech.core import Comparison, LexOrder, LexProfile, Quota, RandAllocation, valid_quotas
from qmech.mechanisms import run_serial
from qmech.randomized import (
    EnumerationCapExceeded,
    envy_in_counts,
    envy_witnesses,
    equal_treatment_witnesses,
    ete_in_counts,
    ld_dominates,
    ld_manipulation,
    ld_manipulation_in_counts,
    ld_prefers,
    prefix_sums,
    rsdq_count_table,
    rsdq_exact,
    rsdq_sample,
    sd_dominates,
)
from qmech.space import ProfileSpace

A, B, C, D = range(4)


def prof(*rows):
    return LexProfile.parse(rows)


def matrix(*rows):
    return RandAllocation(tuple(tuple(F(x) for x in r) for r in rows))


GOLDEN = prof("cabd", "acdb", "cbda")
GOLDEN_Q = Quota((2, 1, 1))
GOLDEN_ROWS = (
    (F(3, 6), F(1, 6), F(2, 6), F(2, 6)),
    (F(3, 6), F(0), F(2, 6), F(3, 6)),
    (F(0), F(5, 6), F(2, 6), F(1, 6)),
)

LD_PROFILE = prof("cabd", "acdb", "cbda", "acbd")
FIRST = matrix(
    ("0", "1/3", "1/2", "1/6"),
    ("1/2", "0", "0", "1/2"),
    ("0", "1/3", "1/2", "1/6"),
    ("1/2", "1/3", "0", "1/6"),
)
SECOND = matrix(
    ("1/12", "1/3", "5/12", "1/6"),
    ("11/24", "0", "1/12", "11/24"),
    ("0", "5/12", "5/12", "1/6"),
    ("11/24", "1/4", "1/12", "5/24"),
)


def oracle_rsdq(profile, quota):
    """Independent picker: each dictator scans its ranking for free objects."""
    n, m = profile.n, profile.m
    total = [[0] * m for _ in range(n)]
    count = 0
    for order in itertools.permutations(range(n), len(quota)):
        taken = set()
        for agent, size in zip(order, quota.sizes):
            picks = [o for o in profile[agent].ranking if o not in taken][:size]
            taken.update(picks)
            for o in picks:
                total[agent][o] += 1
        count += 1
    return tuple(tuple(F(c, count) for c in row) for row in total)


# ---------------------------------------------------------------------------
# exact lottery


def test_golden_table():
    got, support = rsdq_exact(GOLDEN, GOLDEN_Q)
    assert got.rows == GOLDEN_ROWS
    assert got.total == 4
    assert len(support) == 6


def test_small_exact_cases():
    got, _ = rsdq_exact(LexProfile.identical(LexOrder.parse("ab"), 2), Quota((1, 1)))
    assert got.rows == ((F(1, 2), F(1, 2)), (F(1, 2), F(1, 2)))
    # positional quotas: whoever goes first takes two objects
    got, _ = rsdq_exact(prof("abc", "bac"), Quota((2, 1)))
    assert got.rows == oracle_rsdq(prof("abc", "bac"), Quota((2, 1)))
    assert got.rows == ((F(1, 2), F(1, 2), F(1, 2)), (F(1, 2), F(1, 2), F(1, 2)))


profiles_34 = st.lists(st.permutations(range(4)), min_size=3, max_size=3).map(
    lambda rows: LexProfile(tuple(LexOrder(tuple(r)) for r in rows))
)


@given(profiles_34, st.sampled_from(valid_quotas(3, 4)))
def test_exact_matches_independent_oracle(profile, quota):
    got, support = rsdq_exact(profile, quota)
    assert got.rows == oracle_rsdq(profile, quota)
    assert got.problems(total=quota.total) == []
    assert support.problems(profile, quota) == []
    for row in got:
        assert sum(row) == F(quota.total, profile.n)


def test_support_weights_and_ex_post_efficiency():
    _, support = rsdq_exact(GOLDEN, GOLDEN_Q)
    expected = F(1, math.comb(3, 3) * math.factorial(3))
    assert all(w == expected for _, _, w in support)
    assert sum(w for _, _, w in support) == 1
    for order, alloc, _ in support:
        assert alloc == run_serial(GOLDEN, order, GOLDEN_Q)
        assert axioms.pareto_c_efficient(alloc, GOLDEN, GOLDEN_Q.total)


def test_exact_refuses_past_cap():
    with pytest.raises(EnumerationCapExceeded, match="rsdq_sample"):
        rsdq_exact(GOLDEN, GOLDEN_Q, cap=5)


# ---------------------------------------------------------------------------
# sampling


def test_single_trial_is_a_serial_outcome():
    got = rsdq_sample(GOLDEN, GOLDEN_Q, trials=1, seed=3)
    outcomes = [
        run_serial(GOLDEN, order, GOLDEN_Q) for order in itertools.permutations(range(3))
    ]
    as_matrix = [np.array([[int(o in b) for o in range(4)] for b in out]) for out in outcomes]
    assert any((got == x).all() for x in as_matrix)


def test_sample_converges_and_is_reproducible():
    exact = np.array(GOLDEN_ROWS, dtype=float)
    a = rsdq_sample(GOLDEN, GOLDEN_Q, trials=100_000, seed=42)
    b = rsdq_sample(GOLDEN, GOLDEN_Q, trials=100_000, seed=42)
    assert np.abs(a - exact).max() <= 0.01
    assert a.tobytes() == b.tobytes()
    c = rsdq_sample(GOLDEN, GOLDEN_Q, trials=100_000, seed=43)
    assert c.tobytes() != a.tobytes()


def test_symmetric_sample_near_half():
    same = LexProfile.identical(LexOrder.parse("ab"), 2)
    got = rsdq_sample(same, Quota((1, 1)), trials=50_000, seed=1)
    assert np.abs(got - 0.5).max() < 0.01


# ---------------------------------------------------------------------------
# ld / sd


def test_ld_prefers_examples():
    pref = LexOrder.parse("cabd")
    assert ld_prefers(pref, FIRST[0], SECOND[0]) is Comparison.A_WINS
    assert ld_prefers(pref, FIRST[0], FIRST[0]) is Comparison.EQUAL
    assert ld_prefers(LexOrder.parse("ab"), (F(2, 5), F(3, 5)), (F(2, 5), F(7, 10))) is Comparison.B_WINS


def test_ld_and_sd_fixture():
    assert ld_dominates(FIRST, SECOND, LD_PROFILE)
    assert not ld_dominates(SECOND, FIRST, LD_PROFILE)
    assert ld_dominates(FIRST, FIRST, LD_PROFILE)
    assert not sd_dominates(FIRST, SECOND, LD_PROFILE)
    assert not sd_dominates(SECOND, FIRST, LD_PROFILE)
    assert not sd_dominates(FIRST, FIRST, LD_PROFILE)
    agent2 = LD_PROFILE[1]
    assert prefix_sums(agent2, FIRST[1])[1] == F(12, 24)
    assert prefix_sums(agent2, SECOND[1])[1] == F(13, 24)


@st.composite
def rational_matrices(draw, n=3, m=3):
    den = draw(st.integers(1, 6))
    cell = st.integers(0, den).map(lambda k: F(k, den))
    return [RandAllocation(tuple(tuple(draw(cell) for _ in range(m)) for _ in range(n))) for _ in range(2)]


@given(rational_matrices(), st.lists(st.permutations(range(3)), min_size=3, max_size=3))
def test_sd_dominance_implies_ld_dominance(mats, rows):
    a, b = mats
    profile = LexProfile(tuple(LexOrder(tuple(r)) for r in rows))
    if sd_dominates(a, b, profile):
        assert ld_dominates(a, b, profile)


@given(
    st.permutations(range(4)),
    st.lists(st.lists(st.integers(0, 4), min_size=4, max_size=4), min_size=3, max_size=3),
)
def test_ld_prefers_total_and_transitive(ranking, raw):
    pref = LexOrder(tuple(ranking))
    x, y, z = (tuple(F(v, 4) for v in row) for row in raw)
    if x != y:
        assert ld_prefers(pref, x, y) is not Comparison.EQUAL
        assert ld_prefers(pref, x, y) is not ld_prefers(pref, y, x)
    if ld_prefers(pref, x, y) is Comparison.A_WINS and ld_prefers(pref, y, z) is Comparison.A_WINS:
        assert ld_prefers(pref, x, z) is Comparison.A_WINS


# ---------------------------------------------------------------------------
# envy and equal treatment


def test_envy_examples():
    golden, _ = rsdq_exact(GOLDEN, GOLDEN_Q)
    assert envy_witnesses(golden, GOLDEN) == []
    poor = matrix(("1/4", "1/2"), ("1/2", "1/2"))
    assert envy_witnesses(poor, prof("ab", "ba")) == [(0, 1, A)]
    same = LexProfile.identical(LexOrder.parse("ab"), 2)
    det = RandAllocation.from_deterministic(run_serial(same, (0, 1), Quota((1, 1))), 2)
    assert envy_witnesses(det, same) == [(1, 0, A)]


def test_equal_treatment_examples():
    same = LexProfile.identical(LexOrder.parse("abc"), 3)
    lottery, _ = rsdq_exact(same, Quota((1, 1, 1)))
    assert equal_treatment_witnesses(lottery, same) == []
    golden, _ = rsdq_exact(GOLDEN, GOLDEN_Q)
    assert equal_treatment_witnesses(golden, GOLDEN) == []
    unfair = matrix(("1", "0"), ("0", "1"))
    assert equal_treatment_witnesses(unfair, LexProfile.identical(LexOrder.parse("ab"), 2)) == [(0, 1)]


def test_vectorised_envy_and_ete_agree_with_direct_scan():
    for q in valid_quotas(2, 3):
        space, counts, den = rsdq_count_table(2, 3, q)
        direct_envy = direct_ete = None
        for idx, p in enumerate(space):
            lottery, _ = rsdq_exact(p, q)
            if direct_envy is None and envy_witnesses(lottery, p):
                direct_envy = (idx, *envy_witnesses(lottery, p)[0])
            if direct_ete is None and equal_treatment_witnesses(lottery, p):
                direct_ete = (idx, *equal_treatment_witnesses(lottery, p)[0])
            assert (counts[idx] * 1).tolist() == [[int(x * den) for x in row] for row in lottery]
        assert envy_in_counts(space, counts) == direct_envy
        assert ete_in_counts(space, counts) == direct_ete


def test_vectorised_envy_finds_planted_envy():
    space = ProfileSpace(2, 2)
    counts = np.zeros((space.size, 2, 2), dtype=np.int64)
    counts[3] = [[0, 1], [1, 0]]  # profile 3 is (ba, ba): agent 0 gets b, agent 1 gets a
    assert envy_in_counts(space, counts) == (3, 1, 0, B)
    assert ete_in_counts(space, counts) == (3, 0, 1)


# ---------------------------------------------------------------------------
# strategyproofness under ld


@pytest.mark.parametrize("n,m", [(2, 3), (2, 4), (3, 3), (3, 4)])
def test_rsdq_is_ld_strategyproof_on_the_grid(n, m):
    for q in valid_quotas(n, m):
        space, counts, den = rsdq_count_table(n, m, q)
        assert ld_manipulation_in_counts(space, counts, den) is None


def test_vectorised_ld_scan_matches_direct_scan_on_planted_counts():
    space = ProfileSpace(2, 2)
    counts = np.zeros((space.size, 2, 2), dtype=np.int64)
    counts[:, 0, 0] = 1
    counts[1, 0, 1] = 1  # agent 0 also gets b at profile (ab, ba)
    # at (ba, ba) agent 0 can report ab, reach profile 1 and gain b
    w = ld_manipulation_in_counts(space, counts, 1)
    assert w is not None and (w.agent, space.index(w.profile)) == (0, 3)
    assert w.misreport == LexOrder.parse("ab")
    assert (w.truthful_row, w.manipulated_row) == ((1, 0), (1, 1))


def test_scalar_ld_manipulation_none_on_golden():
    assert ld_manipulation(GOLDEN, GOLDEN_Q) is None
