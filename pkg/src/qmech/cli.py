"""``qmech`` command line: allocate, rsdq, audit, dominance, find-manipulation.

Every command writes a JSON report (stdout or ``--output``).  Exit codes:
0 when the allocation was produced or every audited property holds, 2 when
a violation was found, 1 on usage, validation or budget errors.

``QMECH_THREADS`` caps the number of worker processes used by ``audit``.
It changes speed only: configurations are reduced in submission order.
"""

from __future__ import annotations

import argparse
import itertools
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import axioms
from .core import LexOrder, LexProfile, Names, Quota, ValidationError, valid_quotas
from .io import (
    Instance,
    Report,
    allocation_to_json,
    digest,
    format_rational,
    grid_names,
    load_instance,
    load_json,
    matrix_from_json,
    matrix_to_csv,
    matrix_to_json,
    mechanism_from_json,
    order_to_json,
    parse_quota,
    profile_to_json,
    witness_to_json,
)
from .mechanisms import (
    SequentialDictatorQuota,
    SerialDictatorQuota,
    build_identical_profile,
    build_identical_profile_seq,
)
from .randomized import (
    DEFAULT_ENUMERATION_CAP,
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
from .space import DEFAULT_MAX_PROFILES, BudgetExceeded, OutcomeTable, ProfileSpace

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2

MECHANISM_KINDS = ("sd", "sequential", "interleave", "strict", "balanced", "draft", "bossy", "imposed", "rsdq")
DETERMINISTIC_PROPERTIES = ("sp", "nonbossy", "neutral", "pareto", "group", "reallocation")
LOTTERY_PROPERTIES = ("envyfree", "ete", "expost", "sp")
DEFAULT_PROPERTIES = {"det": "sp,nonbossy,neutral,pareto", "rsdq": "envyfree,ete,expost,sp"}
DEFAULT_MAX_EVALUATIONS = 5_000_000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# shared helpers


def _threads() -> int:
    raw = os.environ.get("QMECH_THREADS", "1").strip() or "1"
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"QMECH_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise UsageError("QMECH_THREADS must be >= 1")
    return value


def _mechanism_spec(args, instance: Instance | None) -> dict:
    base = dict(instance.mechanism) if instance is not None and instance.mechanism else {}
    spec = {"kind": args.mechanism} if args.mechanism else dict(base) or {"kind": "sd"}
    if args.mechanism and base.get("kind") == args.mechanism:
        spec = {**base, "kind": args.mechanism}
    if getattr(args, "order", None):
        spec["order"] = args.order.split(",")
    if getattr(args, "sequence", None):
        spec["sequence"] = args.sequence.split(",")
    if getattr(args, "branch", None):
        spec["branch"] = args.branch
    return spec


def _quota(args, instance: Instance | None, spec: dict) -> Quota | None:
    if getattr(args, "quota", None):
        return parse_quota(args.quota)
    if "quota" in spec:
        return parse_quota(spec["quota"])
    return instance.quota if instance is not None else None


def _command_echo(name: str, args) -> dict:
    skip = {"func", "output", "timing"}
    return {"name": name, "args": {k: v for k, v in sorted(vars(args).items()) if k not in skip}}


def _emit(report: Report, args) -> None:
    text = report.to_json()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _timing(args, start: float) -> dict | None:
    return {"seconds": round(time.perf_counter() - start, 6)} if args.timing else None


def _serialize_spec(spec: dict, quota: Quota | None) -> dict:
    out = dict(spec)
    if quota is not None and spec.get("kind") in ("sd", "sequential", "bossy", "rsdq"):
        out["quota"] = list(quota.sizes)
    return out


# ---------------------------------------------------------------------------
# allocate


def cmd_allocate(args) -> int:
    start = time.perf_counter()
    inst = load_instance(args.instance)
    spec = _mechanism_spec(args, inst)
    if spec["kind"] == "rsdq":
        raise UsageError("rsdq is a lottery; use the 'rsdq' command")
    quota = _quota(args, inst, spec)
    mech = mechanism_from_json(spec, inst.names, quota)
    alloc = mech(inst.profile)
    results = {
        "mechanism": _serialize_spec(spec, quota),
        "allocation": allocation_to_json(alloc, inst.names),
        "assigned": alloc.size,
    }
    if args.identical_profile:
        if isinstance(mech, SerialDictatorQuota):
            identical = build_identical_profile(inst.profile, mech.order, mech.quota)
        elif isinstance(mech, SequentialDictatorQuota):
            identical = build_identical_profile_seq(inst.profile, mech.policy, mech.quota)
        else:
            raise UsageError("--identical-profile needs a serial (sd) or sequential mechanism")
        again = mech(identical)
        results["identical_profile"] = {
            "profile": profile_to_json(identical, inst.names),
            "allocation": allocation_to_json(again, inst.names),
            "agrees": again == alloc,
        }
    report = Report(_command_echo("allocate", args), inst.digest(), results, timing=_timing(args, start))
    _emit(report, args)
    return EXIT_OK


# ---------------------------------------------------------------------------
# rsdq


def cmd_rsdq(args) -> int:
    start = time.perf_counter()
    inst = load_instance(args.instance)
    quota = parse_quota(args.quota) if args.quota else inst.quota
    if quota is None:
        raise ValidationError("a quota is required (instance 'quota' or --quota)")
    names = inst.names
    if args.sample is not None:
        matrix = rsdq_sample(inst.profile, quota, args.sample, args.seed)
        rows = [[float(x) for x in row] for row in matrix]
        results = {"quota": list(quota.sizes), "trials": args.sample, "matrix": rows}
        csv_rows = rows
        report_kw = {"seed": args.seed, "exhaustive": False, "sampled": True}
    else:
        matrix, support = rsdq_exact(inst.profile, quota, args.cap)
        results = {
            "quota": list(quota.sizes),
            "matrix": matrix_to_json(matrix),
            "total": format_rational(matrix.total),
            "orderings": len(support),
        }
        if args.support:
            results["support"] = [
                {
                    "ordering": [names.agents[a] for a in order],
                    "allocation": allocation_to_json(alloc, names),
                    "weight": format_rational(w),
                }
                for order, alloc, w in support
            ]
        csv_rows = results["matrix"]
        report_kw = {"seed": None, "exhaustive": True, "sampled": False}
    if args.csv:
        Path(args.csv).write_text(matrix_to_csv(csv_rows, names))
    report = Report(_command_echo("rsdq", args), inst.digest(), results, timing=_timing(args, start), **report_kw)
    _emit(report, args)
    return EXIT_OK


# ---------------------------------------------------------------------------
# dominance


def cmd_dominance(args) -> int:
    start = time.perf_counter()
    inst = load_instance(args.instance)
    a, b = matrix_from_json(load_json(args.a)), matrix_from_json(load_json(args.b))
    for x in (a, b):
        if (x.n, x.m) != (inst.n, inst.m):
            raise ValidationError(f"matrix shape {x.n}x{x.m} does not match the instance ({inst.n}x{inst.m})")
    names = inst.names
    if args.relation == "ld":
        verdicts = {"a_over_b": ld_dominates(a, b, inst.profile), "b_over_a": ld_dominates(b, a, inst.profile)}
        detail = {
            names.agents[i]: ld_prefers(pref, a[i], b[i]).value for i, pref in enumerate(inst.profile)
        }
    else:
        verdicts = {"a_over_b": sd_dominates(a, b, inst.profile), "b_over_a": sd_dominates(b, a, inst.profile)}
        detail = {
            names.agents[i]: {
                "prefix": order_to_json(pref, names),
                "a": [format_rational(x) for x in prefix_sums(pref, a[i])],
                "b": [format_rational(x) for x in prefix_sums(pref, b[i])],
            }
            for i, pref in enumerate(inst.profile)
        }
    results = {"relation": args.relation, **verdicts, "agents": detail}
    report = Report(_command_echo("dominance", args), inst.digest(), results, timing=_timing(args, start))
    _emit(report, args)
    return EXIT_OK


# ---------------------------------------------------------------------------
# find-manipulation


def cmd_find_manipulation(args) -> int:
    start = time.perf_counter()
    inst = load_instance(args.instance)
    spec = _mechanism_spec(args, inst)
    quota = _quota(args, inst, spec)
    if spec["kind"] == "rsdq":
        if quota is None:
            raise ValidationError("rsdq needs a quota")
        w = ld_manipulation(inst.profile, quota)
        witness = None if w is None else _lottery_manipulation_json(w, inst.names)
    else:
        mech = mechanism_from_json(spec, inst.names, quota)
        if args.exhaustive:
            w = axioms.scan_manipulation(mech, inst.n, inst.m, max_profiles=args.max_profiles)
        else:
            w = axioms.find_manipulation(mech, inst.profile)
        witness = witness_to_json(w, inst.names)
    results = {"mechanism": _serialize_spec(spec, quota), "manipulable": witness is not None, "witness": witness}
    report = Report(
        _command_echo("find-manipulation", args), inst.digest(), results,
        exhaustive=bool(args.exhaustive), sampled=False, timing=_timing(args, start),
    )
    _emit(report, args)
    return EXIT_VIOLATION if witness is not None else EXIT_OK


# ---------------------------------------------------------------------------
# audit


def _lottery_manipulation_json(w, names: Names) -> dict:
    return {
        "type": "lottery_manipulation",
        "agent": names.agents[w.agent],
        "profile": profile_to_json(w.profile, names),
        "misreport": order_to_json(w.misreport, names),
        "truthful_row": [format_rational(x) for x in w.truthful_row],
        "manipulated_row": [format_rational(x) for x in w.manipulated_row],
    }


def _envy_json(profile: LexProfile, matrix, i: int, j: int, pivot: int, names: Names) -> dict:
    return {
        "type": "envy",
        "profile": profile_to_json(profile, names),
        "envious": names.agents[i],
        "envied": names.agents[j],
        "object": names.objects[pivot],
        "matrix": matrix_to_json(matrix),
    }


def _ete_json(profile: LexProfile, matrix, i: int, j: int, names: Names) -> dict:
    return {
        "type": "equal_treatment",
        "profile": profile_to_json(profile, names),
        "agents": [names.agents[i], names.agents[j]],
        "matrix": matrix_to_json(matrix),
    }


def _expost_json(order, w, names: Names) -> dict:
    return {"type": "ex_post", "ordering": [names.agents[a] for a in order], "pareto": witness_to_json(w, names)}


def _verdict(witness) -> dict:
    return {"holds": witness is None, "witness": witness}


def _scalar_budget(count: int, per_profile: int, limit: int, what: str) -> None:
    if count * per_profile > limit:
        raise BudgetExceeded(f"{what}: about {count * per_profile} evaluations exceed the budget of {limit}")


def _deterministic_profile_checks(mech, profiles: list[LexProfile], n, m, prop, task) -> object:
    """First witness of ``prop`` among an explicit list of profiles."""
    if prop == "sp":
        return axioms.scan_manipulation(mech, n, m, profiles=profiles)
    if prop == "nonbossy":
        return axioms.find_bossiness(mech, n, m, profiles=profiles)
    if prop == "neutral":
        return axioms.find_neutrality_violation(mech, n, m, profiles=profiles)
    if prop == "pareto":
        return axioms.scan_pareto(mech, n, m, profiles=profiles)
    finder = axioms.find_group_manipulation if prop == "group" else axioms.find_reallocation
    k = math.factorial(m)
    per = sum(math.comb(n, s) * k**s for s in range(1, min(task["max_coalition"], n) + 1))
    _scalar_budget(len(profiles), per, task["max_evaluations"], prop)
    for p in profiles:
        w = finder(mech, p, task["max_coalition"])
        if w is not None:
            return w
    return None


def _audit_deterministic(task: dict, names: Names) -> dict:
    n, m = task["n"], task["m"]
    quota = Quota(tuple(task["quota"])) if task.get("quota") else None
    mech = mechanism_from_json(task["spec"], names, quota)
    out = {}
    if task["mode"] == "grid":
        table = OutcomeTable.build(mech, n, m, task["max_profiles"])
        for prop in task["properties"]:
            if prop == "sp":
                w = axioms.manipulation_in_table(table)
            elif prop == "nonbossy":
                w = axioms.bossiness_in_table(table)
            elif prop == "neutral":
                w = axioms.neutrality_in_table(table)
            elif prop == "pareto":
                w = axioms.pareto_in_table(table)
            elif prop == "group":
                w = axioms.group_in_table(table, task["max_coalition"], task["max_evaluations"])
            else:
                w = _deterministic_profile_checks(mech, list(table.space), n, m, prop, task)
            out[prop] = _verdict(witness_to_json(w, names))
        return out
    profiles = _task_profiles(task)
    for prop in task["properties"]:
        w = _deterministic_profile_checks(mech, profiles, n, m, prop, task)
        out[prop] = _verdict(witness_to_json(w, names))
    return out


def _task_profiles(task: dict) -> list[LexProfile]:
    if task["mode"] == "profile":
        return [LexProfile(tuple(LexOrder(tuple(r)) for r in task["profile"]))]
    return axioms.sample_profiles(task["n"], task["m"], task["sample"], task["seed"])


def _audit_lottery_at(profile: LexProfile, quota: Quota, prop: str, names: Names, cap: int):
    matrix, support = rsdq_exact(profile, quota, cap)
    if prop == "envyfree":
        ws = envy_witnesses(matrix, profile)
        return None if not ws else _envy_json(profile, matrix, *ws[0], names)
    if prop == "ete":
        ws = equal_treatment_witnesses(matrix, profile)
        return None if not ws else _ete_json(profile, matrix, *ws[0], names)
    if prop == "sp":
        w = ld_manipulation(profile, quota)
        return None if w is None else _lottery_manipulation_json(w, names)
    for order, alloc, _ in support:
        w = axioms.find_pareto_improvement(alloc, profile, quota.total)
        if w is not None:
            return _expost_json(order, axioms.ParetoWitness(w.allocation, w.dominating, profile), names)
    return None


def _audit_lottery(task: dict, names: Names) -> dict:
    n, m = task["n"], task["m"]
    quota = Quota(tuple(task["quota"]))
    out = {}
    if task["mode"] != "grid":
        profiles = _task_profiles(task)
        for prop in task["properties"]:
            w = None
            for p in profiles:
                w = _audit_lottery_at(p, quota, prop, names, task["cap"])
                if w is not None:
                    break
            out[prop] = _verdict(w)
        return out
    space, counts, den = rsdq_count_table(n, m, quota, task["max_profiles"])

    def matrix_at(p):
        return rsdq_exact(space.profile(p), quota, task["cap"])[0]

    for prop in task["properties"]:
        w = None
        if prop == "envyfree":
            hit = envy_in_counts(space, counts)
            if hit is not None:
                p, i, j, o = hit
                w = _envy_json(space.profile(p), matrix_at(p), i, j, o, names)
        elif prop == "ete":
            hit = ete_in_counts(space, counts)
            if hit is not None:
                p, i, j = hit
                w = _ete_json(space.profile(p), matrix_at(p), i, j, names)
        elif prop == "sp":
            lm = ld_manipulation_in_counts(space, counts, den)
            w = None if lm is None else _lottery_manipulation_json(lm, names)
        else:
            for order in itertools.permutations(range(n), len(quota)):
                table = OutcomeTable.build(SerialDictatorQuota(order, quota), n, m, task["max_profiles"])
                pw = axioms.pareto_in_table(table)
                if pw is not None:
                    w = _expost_json(order, pw, names)
                    break
        out[prop] = _verdict(w)
    return out


def _run_task(task: dict) -> dict:
    names = Names(tuple(task["agents"]), tuple(task["objects"]))
    if task["spec"]["kind"] == "rsdq":
        props = _audit_lottery(task, names)
    else:
        props = _audit_deterministic(task, names)
    return {"mechanism": task["echo"], "properties": props}


def _grid_specs(args, names: Names, spec: dict) -> list[tuple[dict, Quota | None]]:
    n, m = names.n, names.m
    kind = spec["kind"]
    if args.quota:
        quotas = [parse_quota(args.quota)]
    elif "quota" in spec:
        quotas = [parse_quota(spec["quota"])]
    elif kind in ("interleave", "imposed"):
        quotas = [None]
    elif kind == "bossy":
        quotas = [q for q in valid_quotas(n, m) if len(q) >= 2]
    else:
        quotas = valid_quotas(n, m)
    out = []
    for q in quotas:
        if kind == "sd" and "order" not in spec:
            for order in itertools.permutations(range(n), len(q)):
                out.append(({**spec, "order": [names.agents[a] for a in order]}, q))
        else:
            out.append((dict(spec), q))
    return out


def cmd_audit(args) -> int:
    start = time.perf_counter()
    if args.instance:
        inst = load_instance(args.instance)
        names, profile = inst.names, inst.profile
        instance_digest = inst.digest()
    else:
        if args.agents is None or args.objects is None:
            raise UsageError("audit needs an instance path or both --agents and --objects")
        if args.agents < 1 or args.objects < 1:
            raise ValidationError("--agents and --objects must be positive")
        inst, profile = None, None
        names = grid_names(args.agents, args.objects)
        instance_digest = digest({"agents": args.agents, "objects": args.objects})
    spec = _mechanism_spec(args, inst)
    if spec["kind"] not in MECHANISM_KINDS:
        raise UsageError(f"unknown mechanism {spec['kind']!r}")
    lottery = spec["kind"] == "rsdq"
    props = (args.properties or DEFAULT_PROPERTIES["rsdq" if lottery else "det"]).split(",")
    allowed = LOTTERY_PROPERTIES if lottery else DETERMINISTIC_PROPERTIES
    bad = [p for p in props if p not in allowed]
    if bad:
        raise UsageError(f"properties {bad} do not apply to {spec['kind']}; choose from {','.join(allowed)}")

    if inst is not None and not args.exhaustive and args.sample is None:
        mode = "profile"
        configs = [(spec, _quota(args, inst, spec))]
    else:
        mode = "grid" if args.sample is None else "sample"
        if inst is not None:
            configs = [(spec, _quota(args, inst, spec))]
        else:
            configs = _grid_specs(args, names, spec)
        if mode == "grid":
            ProfileSpace(names.n, names.m, args.max_profiles)  # budget check before any work

    tasks = []
    for cfg, q in configs:
        if lottery and q is None:
            raise ValidationError("rsdq needs a quota")
        # fail fast on invalid parameters
        if not lottery:
            mechanism_from_json(cfg, names, q)
        tasks.append({
            "n": names.n, "m": names.m, "agents": list(names.agents), "objects": list(names.objects),
            "spec": cfg, "quota": None if q is None else list(q.sizes), "echo": _serialize_spec(cfg, q),
            "properties": props, "mode": mode, "max_profiles": args.max_profiles,
            "max_coalition": args.max_coalition or names.n, "max_evaluations": args.max_evaluations,
            "cap": args.cap, "sample": args.sample, "seed": args.seed,
            "profile": None if profile is None else [list(p.ranking) for p in profile],
        })

    workers = min(_threads(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_task, tasks))
    else:
        rows = [_run_task(t) for t in tasks]

    violations = sum(not v["holds"] for row in rows for v in row["properties"].values())
    results = {
        "mode": mode,
        "properties": props,
        "configurations": rows,
        "checked": len(rows),
        "violations": violations,
        "holds": violations == 0,
    }
    report = Report(
        _command_echo("audit", args), instance_digest, results,
        seed=args.seed if mode == "sample" else None,
        exhaustive=mode == "grid", sampled=mode == "sample", timing=_timing(args, start),
    )
    _emit(report, args)
    return EXIT_OK if violations == 0 else EXIT_VIOLATION


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", help="write the JSON report here instead of stdout")
    p.add_argument("--timing", action="store_true", help="include wall-clock timing in the report")


def _add_mechanism(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mechanism", choices=MECHANISM_KINDS, help="mechanism kind (default: instance's, else sd)")
    p.add_argument("--order", help="comma-separated dictator ordering (agent labels)")
    p.add_argument("--quota", help="comma-separated quota, e.g. 2,1,1")
    p.add_argument("--sequence", help="comma-separated picking sequence for interleave")
    p.add_argument("--branch", choices=("reverse", "drop"), help="bossy fixture branch")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qmech", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("allocate", help="run a deterministic mechanism on an instance")
    p.add_argument("instance")
    _add_mechanism(p)
    p.add_argument("--identical-profile", action="store_true", help="also build the equivalent identical profile")
    _add_common(p)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("rsdq", help="random serial dictatorship with quotas")
    p.add_argument("instance")
    p.add_argument("--quota")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="enumerate every ordering (default)")
    mode.add_argument("--sample", type=int, metavar="T", help="Monte Carlo with T trials")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--support", action="store_true", help="list every ordering with its allocation")
    p.add_argument("--csv", metavar="PATH", help="also write the matrix as CSV")
    p.add_argument("--cap", type=int, default=DEFAULT_ENUMERATION_CAP, help="exact enumeration cap")
    _add_common(p)
    p.set_defaults(func=cmd_rsdq)

    p = sub.add_parser("audit", help="check axioms on an instance or an exhaustive grid")
    p.add_argument("--instance")
    p.add_argument("--agents", type=int)
    p.add_argument("--objects", type=int)
    _add_mechanism(p)
    p.add_argument("--properties", help="comma-separated: " + ",".join(dict.fromkeys(DETERMINISTIC_PROPERTIES + LOTTERY_PROPERTIES)))
    p.add_argument("--exhaustive", action="store_true", help="with --instance, scan every profile of its size")
    p.add_argument("--sample", type=int, metavar="K", help="audit K random profiles instead of all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-profiles", type=int, default=DEFAULT_MAX_PROFILES)
    p.add_argument("--max-coalition", type=int)
    p.add_argument("--max-evaluations", type=int, default=DEFAULT_MAX_EVALUATIONS)
    p.add_argument("--cap", type=int, default=DEFAULT_ENUMERATION_CAP)
    _add_common(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("dominance", help="compare two random allocations")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("instance")
    p.add_argument("--relation", choices=("ld", "sd"), default="ld")
    _add_common(p)
    p.set_defaults(func=cmd_dominance)

    p = sub.add_parser("find-manipulation", help="search for a profitable misreport")
    p.add_argument("instance")
    _add_mechanism(p)
    p.add_argument("--exhaustive", action="store_true", help="scan every profile of the instance's size")
    p.add_argument("--max-profiles", type=int, default=DEFAULT_MAX_PROFILES)
    _add_common(p)
    p.set_defaults(func=cmd_find_manipulation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"qmech: usage error: {exc}", file=sys.stderr)
    except (BudgetExceeded, EnumerationCapExceeded) as exc:
        print(f"qmech: budget exceeded: {exc}", file=sys.stderr)
    except (ValidationError, OSError) as exc:
        print(f"qmech: invalid input: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
