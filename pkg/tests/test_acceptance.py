"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import itertools
import json
import time
from fractions import Fraction as F

import numpy as np

from conftest import fixture_path, load_fixture, record_criterion
from qmech import axioms
from qmech.cli import main
from qmech.core import (
    DetAllocation,
    LexOrder,
    LexProfile,
    PickingSequence,
    Quota,
    general_top_k,
    valid_quotas,
)
from qmech.io import allocation_from_json, load_instance, matrix_from_json, witness_from_json, witness_to_json
from qmech.mechanisms import (
    BossyFixture,
    Interleaving,
    SerialDictatorQuota,
    build_identical_profile,
    run_serial,
)
from qmech.randomized import (
    envy_witnesses,
    equal_treatment_witnesses,
    ld_dominates,
    prefix_sums,
    rsdq_exact,
    rsdq_sample,
    sd_dominates,
)
from qmech.space import OutcomeTable, ProfileSpace

A, B, C, D = range(4)
GRID_SMALL = [(n, m) for n in (1, 2, 3) for m in (1, 2, 3, 4)]


def serial_configs(n, m):
    for q in valid_quotas(n, m):
        for order in itertools.permutations(range(n), len(q)):
            yield order, q


def test_criterion_01_rsdq_golden_table(capsys, tmp_path):
    expected = (
        (F(3, 6), F(1, 6), F(2, 6), F(2, 6)),
        (F(3, 6), F(0), F(2, 6), F(3, 6)),
        (F(0), F(5, 6), F(2, 6), F(1, 6)),
    )
    out = tmp_path / "report.json"
    start = time.perf_counter()
    code = main(["rsdq", str(fixture_path("rsdq_table.json")), "--exact", "--output", str(out)])
    elapsed = time.perf_counter() - start
    got = matrix_from_json(json.loads(out.read_text())["results"]["matrix"])
    ok = code == 0 and got.rows == expected and elapsed < 1.0
    assert record_criterion(1, "RSDQ golden table, exact", ok, f"{elapsed:.3f}s")


def test_criterion_02_identical_profile_golden_pair():
    inst = load_instance(fixture_path("identical_profile.json"))
    order, q = (0, 1, 2), Quota((1, 2, 1))
    same = build_identical_profile(inst.profile, order, q)
    target = LexProfile.identical(LexOrder.parse("acbd"), 3)
    before, after = run_serial(inst.profile, order, q), run_serial(same, order, q)
    bundles = DetAllocation((frozenset({A}), frozenset({C, B}), frozenset({D})))
    ok = same == target and before == after == bundles
    assert record_criterion(2, "identical-profile construction reproduces the outcome", ok)


def test_criterion_03_interleaving_is_manipulable():
    start = time.perf_counter()
    mech = Interleaving(PickingSequence((0, 1, 0)))
    w = axioms.find_manipulation(mech, LexProfile.parse(["abc", "bca"]))
    witness_ok = (
        w is not None
        and w.agent == 0
        and w.misreport.ranking[0] == B
        and w.truthful_bundle == {A, C}
        and w.manipulated_bundle == {A, B}
        and w.verify(mech)
    )
    sequences = [
        PickingSequence(t) for t in itertools.product(range(2), repeat=3) if PickingSequence(t).is_interleaving
    ]
    manipulable = {
        s.turns: axioms.scan_manipulation(Interleaving(s), 2, 3) is not None for s in sequences
    }
    elapsed = time.perf_counter() - start
    ok = witness_ok and len(sequences) == 2 and all(manipulable.values()) and elapsed < 5
    assert record_criterion(3, "interleaving (1,2,1) manipulation witness; every length-3 interleaving manipulable", ok, f"{elapsed:.2f}s")


def test_criterion_04_serial_characterization_audit(serial_table):
    start = time.perf_counter()
    configs = violations = 0
    for n, m in GRID_SMALL:
        for order, q in serial_configs(n, m):
            table = serial_table(order, q, n, m)
            found = [
                axioms.manipulation_in_table(table),
                axioms.bossiness_in_table(table),
                axioms.neutrality_in_table(table),
                axioms.pareto_in_table(table),
            ]
            configs += 1
            violations += sum(w is not None for w in found)
    elapsed = time.perf_counter() - start
    ok = violations == 0 and configs == 170
    assert record_criterion(4, "serial dictatorship passes all four audits on n<=3, m<=4", ok, f"{configs} configurations, {elapsed:.1f}s")


def test_criterion_05_rsdq_envyfree_and_equal_treatment():
    start = time.perf_counter()
    checked = witnesses = 0
    for n in (2, 3):
        for m in (3, 4):
            for q in valid_quotas(n, m):
                for p in ProfileSpace(n, m):
                    lottery, _ = rsdq_exact(p, q)
                    witnesses += len(envy_witnesses(lottery, p)) + len(equal_treatment_witnesses(lottery, p))
                    checked += 1
    elapsed = time.perf_counter() - start
    assert record_criterion(5, "RSDQ envyfree and equal treatment on the full grid", witnesses == 0, f"{checked} lotteries, {elapsed:.1f}s")


def general_serial(prefs, order, q, m):
    taken, bundles = set(), [frozenset()] * len(prefs)
    for agent, size in zip(order, q.sizes):
        bundle = general_top_k(prefs[agent], set(range(m)) - taken, size)
        bundles[agent] = bundle
        taken |= bundle
    return DetAllocation(tuple(bundles))


def test_criterion_06_general_preferences_break_efficiency():
    data = load_fixture("pareto_general.json")
    inst = load_instance(fixture_path("pareto_general.json"))
    outcome = general_serial(inst.general_prefs, (0, 1), inst.quota, inst.m)
    w = axioms.find_pareto_improvement(outcome, inst.general_prefs)
    ok = (
        outcome == allocation_from_json(data["expected"]["allocation"], inst.names)
        and w is not None
        and w.dominating == allocation_from_json(data["expected"]["dominating"], inst.names)
        and w.verify(inst.general_prefs)
        and not axioms.pareto_c_efficient(outcome, inst.general_prefs)
    )
    assert record_criterion(6, "swap witness against the serial outcome under general preferences", ok)


def test_criterion_07_ld_versus_sd():
    inst = load_instance(fixture_path("ld_sd_instance.json"))
    first = matrix_from_json(load_fixture("ld_sd_first.json"))
    second = matrix_from_json(load_fixture("ld_sd_second.json"))
    agent2 = inst.profile[1]
    prefix_first, prefix_second = prefix_sums(agent2, first[1])[1], prefix_sums(agent2, second[1])[1]
    ok = (
        ld_dominates(first, second, inst.profile)
        and not sd_dominates(first, second, inst.profile)
        and not sd_dominates(second, first, inst.profile)
        and prefix_second == F(13, 24)
        and prefix_first == F(12, 24)
        and prefix_second > prefix_first
    )
    assert record_criterion(7, "ld-dominates but sd-incomparable, prefix 13/24 > 12/24", ok)


def group_manipulable(mech, n, m):
    return any(axioms.find_group_manipulation(mech, p, n) is not None for p in ProfileSpace(n, m))


def test_criterion_08_group_strategyproofness_equivalence():
    n, m = 2, 3
    disagreements = 0
    serial_clean = True
    bossy_hits = True
    for order, q in serial_configs(n, m):
        mech = SerialDictatorQuota(order, q)
        group = group_manipulable(mech, n, m)
        individual = axioms.scan_manipulation(mech, n, m) is not None or axioms.find_bossiness(mech, n, m) is not None
        disagreements += group != individual
        serial_clean &= not group and not individual
    for q in (q for q in valid_quotas(n, m) if len(q) == 2):
        mech = BossyFixture(q, "drop")
        group = group_manipulable(mech, n, m)
        individual = axioms.scan_manipulation(mech, n, m) is not None or axioms.find_bossiness(mech, n, m) is not None
        disagreements += group != individual
        bossy_hits &= group and individual
    ok = disagreements == 0 and serial_clean and bossy_hits
    assert record_criterion(8, "group search agrees with strategyproof-and-non-bossy on n=2, m=3", ok, f"{disagreements} disagreements")


def test_criterion_09_reallocation_witness():
    inst = load_instance(fixture_path("reallocation.json"))
    mech = SerialDictatorQuota((0, 1, 2), Quota((1, 1, 1)))
    w = axioms.find_reallocation(mech, inst.profile, 3)
    replayed = None if w is None else witness_from_json(json.loads(json.dumps(witness_to_json(w, inst.names))), inst.names)
    ok = (
        w is not None
        and w.coalition == (0, 2)
        and w.before[0] == w.redistributed[0] == {A}
        and w.before[2] == {B}
        and w.redistributed[2] == {C}
        and w.verify(mech)
        and replayed == w
        and replayed.verify(mech)
    )
    assert record_criterion(9, "reallocation witness for coalition {1,3}", ok)


def test_criterion_10_monte_carlo_convergence(capsys):
    inst = load_instance(fixture_path("rsdq_table.json"))
    exact, _ = rsdq_exact(inst.profile, inst.quota)
    exact = np.array([[float(x) for x in row] for row in exact])
    a = rsdq_sample(inst.profile, inst.quota, 100_000, 42)
    b = rsdq_sample(inst.profile, inst.quota, 100_000, 42)
    argv = ["rsdq", str(fixture_path("rsdq_table.json")), "--sample", "100000", "--seed", "42"]
    main(argv)
    first = capsys.readouterr().out
    main(argv)
    second = capsys.readouterr().out
    deviation = float(np.abs(a - exact).max())
    ok = deviation <= 0.01 and a.tobytes() == b.tobytes() and first == second
    assert record_criterion(10, "10^5-trial sample within 0.01, byte-identical reruns", ok, f"max deviation {deviation:.4f}")


def test_criterion_11_structure_recovery():
    start = time.perf_counter()
    configs = failures = 0
    for n, m in GRID_SMALL:
        for order, q in serial_configs(n, m):
            mech = SerialDictatorQuota(order, q)
            inferred = axioms.infer_serial_structure(mech, n, m, q)
            configs += 1
            if inferred != order or not axioms.verify_serial_equivalence(mech, inferred, q, n, m):
                failures += 1
    bossy = BossyFixture()
    guess = axioms.infer_serial_structure(bossy, 3, 4, bossy.quota)
    cex = None if guess is None else axioms.serial_counterexample(bossy, guess, bossy.quota, 3, 4)
    elapsed = time.perf_counter() - start
    ok = failures == 0 and configs == 170 and guess == (0, 1, 2) and cex is not None
    assert record_criterion(11, "ordering recovered and verified for every (f, q); bossy fixture refuted", ok, f"{configs} configurations, {elapsed:.1f}s")
