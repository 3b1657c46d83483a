"""JSON instance files, rational/matrix encoding, witness and report serialization.

Instance file layout::

    {
      "objects": ["a", "b", "c", "d"],
      "agents": [{"id": "1", "prefs": ["c", "a", "b", "d"]}, ...],
      "quota": [2, 1, 1],
      "general_prefs": {"1": [["b", "c"], ["a"], ...]},      # optional
      "mechanism": {"kind": "sd", "order": ["1", "2", "3"]}   # optional
    }

Rationals are written as lowest-terms ``"num/den"`` strings, integers
without a denominator (``"0"``, ``"1"``).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from .core import (
    DetAllocation,
    GeneralSetPref,
    LexOrder,
    LexProfile,
    Names,
    PickingSequence,
    Quota,
    RandAllocation,
    ValidationError,
    all_subsets,
    validate,
)
from .mechanisms import (
    BossyFixture,
    DictatorPolicy,
    Imposed,
    Interleaving,
    SequentialDictatorQuota,
    SerialDictatorQuota,
    balanced_alternation_seq,
    draft_seq,
    strict_alternation_seq,
)
from . import axioms


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def digest(data: Any) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()


# ---------------------------------------------------------------------------
# rationals and matrices


def format_rational(x) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def parse_rational(text) -> Fraction:
    if isinstance(text, float):
        raise ValidationError(f"refusing inexact float {text!r}; write rationals as 'num/den'")
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"bad rational {text!r}") from None


def matrix_to_json(matrix: RandAllocation) -> list[list[str]]:
    return [[format_rational(x) for x in row] for row in matrix.rows]


def matrix_from_json(data) -> RandAllocation:
    if isinstance(data, dict):
        data = data.get("matrix", data.get("results", {}).get("matrix"))
    if not isinstance(data, list):
        raise ValidationError("expected a list of rows or an object with a 'matrix' key")
    return RandAllocation(tuple(tuple(parse_rational(x) for x in row) for row in data))


def matrix_to_csv(rows, names: Names) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["agent", *names.objects])
    for label, row in zip(names.agents, rows):
        writer.writerow([label, *(x if isinstance(x, str) else repr(float(x)) for x in row)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class Instance:
    names: Names
    profile: LexProfile
    quota: Quota | None = None
    general_prefs: tuple[GeneralSetPref, ...] | None = None
    mechanism: dict | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.profile.n

    @property
    def m(self) -> int:
        return self.profile.m

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "objects": list(self.names.objects),
            "agents": [
                {"id": label, "prefs": [self.names.objects[o] for o in pref.ranking]}
                for label, pref in zip(self.names.agents, self.profile)
            ],
        }
        if self.quota is not None:
            out["quota"] = list(self.quota.sizes)
        if self.general_prefs is not None:
            out["general_prefs"] = {
                label: [self.names.bundle_labels(s) for s in g.ranking]
                for label, g in zip(self.names.agents, self.general_prefs)
            }
        if self.mechanism is not None:
            out["mechanism"] = self.mechanism
        return out

    def digest(self) -> str:
        return digest(self.to_dict())


def _labels(seq, what) -> tuple[str, ...]:
    if not isinstance(seq, list) or not seq:
        raise ValidationError(f"'{what}' must be a non-empty list")
    return tuple(str(x) for x in seq)


def parse_instance(data: dict) -> Instance:
    if not isinstance(data, dict):
        raise ValidationError("instance must be a JSON object")
    objects = _labels(data.get("objects"), "objects")
    agents_raw = data.get("agents")
    if not isinstance(agents_raw, list) or not agents_raw:
        raise ValidationError("'agents' must be a non-empty list")
    agent_labels = tuple(str(a.get("id", i + 1)) for i, a in enumerate(agents_raw))
    names = Names(agent_labels, objects)
    prefs = []
    for label, a in zip(agent_labels, agents_raw):
        ranking = a.get("prefs")
        if not isinstance(ranking, list) or sorted(map(str, ranking)) != sorted(objects):
            raise ValidationError(f"prefs of agent {label} must be a permutation of the objects")
        prefs.append(LexOrder(tuple(names.object_index(o) for o in ranking)))
    profile = LexProfile(tuple(prefs))
    quota = None
    if data.get("quota") is not None:
        quota = Quota(tuple(int(q) for q in data["quota"]))
        validate(quota, names.n, names.m)
    general = None
    if data.get("general_prefs") is not None:
        raw = data["general_prefs"]
        general = []
        for label in agent_labels:
            if label not in raw:
                raise ValidationError(f"general_prefs lacks agent {label}")
            ranking = tuple(frozenset(names.object_index(o) for o in s) for s in raw[label])
            general.append(complete_general_pref(ranking, names.m))
        general = tuple(general)
    mechanism = data.get("mechanism")
    if mechanism is not None and not isinstance(mechanism, dict):
        raise ValidationError("'mechanism' must be an object")
    return Instance(names, profile, quota, general, mechanism)


def complete_general_pref(prefix, m: int) -> GeneralSetPref:
    """Extend a partial bundle ranking to all subsets.

    Unlisted bundles follow, larger first, ties by ascending object indices.
    """
    prefix = tuple(frozenset(s) for s in prefix)
    if len(set(prefix)) != len(prefix):
        raise ValidationError("general preference lists a bundle twice")
    rest = [s for s in all_subsets(range(m)) if s not in set(prefix)]
    rest.sort(key=lambda s: (-len(s), sorted(s)))
    return GeneralSetPref(prefix + tuple(rest), m)


def load_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None


def load_instance(path) -> Instance:
    return parse_instance(load_json(path))


def grid_names(n: int, m: int) -> Names:
    return Names.default(n, m)


# ---------------------------------------------------------------------------
# allocations, profiles, witnesses


def allocation_to_json(alloc: DetAllocation, names: Names) -> dict[str, list[str]]:
    return {names.agents[i]: names.bundle_labels(b) for i, b in enumerate(alloc)}


def allocation_from_json(data: dict, names: Names) -> DetAllocation:
    bundles = [frozenset()] * names.n
    for label, objs in data.items():
        bundles[names.agent_index(label)] = frozenset(names.object_index(o) for o in objs)
    return DetAllocation(tuple(bundles))


def order_to_json(order: LexOrder, names: Names) -> list[str]:
    return [names.objects[o] for o in order.ranking]


def profile_to_json(profile: LexProfile, names: Names) -> dict[str, list[str]]:
    return {names.agents[i]: order_to_json(p, names) for i, p in enumerate(profile)}


def agents_to_json(agents, names: Names) -> list[str]:
    return [names.agents[a] for a in agents]


def witness_to_json(w, names: Names) -> dict | None:
    if w is None:
        return None
    alloc = lambda a: allocation_to_json(a, names)  # noqa: E731
    if isinstance(w, axioms.ManipulationWitness):
        return {
            "type": "manipulation",
            "agent": names.agents[w.agent],
            "profile": profile_to_json(w.profile, names),
            "misreport": order_to_json(w.misreport, names),
            "truthful_bundle": names.bundle_labels(w.truthful_bundle),
            "manipulated_bundle": names.bundle_labels(w.manipulated_bundle),
        }
    if isinstance(w, axioms.BossinessWitness):
        return {
            "type": "bossiness",
            "agent": names.agents[w.agent],
            "profile": profile_to_json(w.profile, names),
            "misreport": order_to_json(w.misreport, names),
            "before": alloc(w.before),
            "after": alloc(w.after),
        }
    if isinstance(w, axioms.NeutralityWitness):
        return {
            "type": "neutrality",
            "profile": profile_to_json(w.profile, names),
            "phi": {names.objects[o]: names.objects[w.phi[o]] for o in range(len(w.phi))},
            "renamed_outcome": alloc(w.renamed_outcome),
            "outcome_of_renamed": alloc(w.outcome_of_renamed),
        }
    if isinstance(w, axioms.ParetoWitness):
        return {
            "type": "pareto",
            "profile": None if w.profile is None else profile_to_json(w.profile, names),
            "allocation": alloc(w.allocation),
            "dominating": alloc(w.dominating),
        }
    if isinstance(w, axioms.GroupWitness):
        return {
            "type": "group",
            "coalition": agents_to_json(w.coalition, names),
            "profile": profile_to_json(w.profile, names),
            "reports": {names.agents[a]: order_to_json(r, names) for a, r in zip(w.coalition, w.reports)},
            "before": alloc(w.before),
            "after": alloc(w.after),
        }
    if isinstance(w, axioms.ReallocationWitness):
        return {
            "type": "reallocation",
            "coalition": agents_to_json(w.coalition, names),
            "profile": profile_to_json(w.profile, names),
            "reports": {names.agents[a]: order_to_json(r, names) for a, r in zip(w.coalition, w.reports)},
            "before": alloc(w.before),
            "reported": alloc(w.reported),
            "redistributed": alloc(w.redistributed),
        }
    if isinstance(w, dict):
        return w
    raise TypeError(f"cannot serialize {type(w).__name__}")


def _profile_from_json(data: dict, names: Names) -> LexProfile:
    return LexProfile(
        tuple(LexOrder(tuple(names.object_index(o) for o in data[label])) for label in names.agents)
    )


def _order_from_json(data, names: Names) -> LexOrder:
    return LexOrder(tuple(names.object_index(o) for o in data))


def witness_from_json(data: dict, names: Names):
    """Inverse of :func:`witness_to_json` for replay."""
    kind = data["type"]
    prof = lambda: _profile_from_json(data["profile"], names)  # noqa: E731
    alloc = lambda key: allocation_from_json(data[key], names)  # noqa: E731
    bundle = lambda key: frozenset(names.object_index(o) for o in data[key])  # noqa: E731
    if kind == "manipulation":
        return axioms.ManipulationWitness(
            names.agent_index(data["agent"]), prof(), _order_from_json(data["misreport"], names),
            bundle("truthful_bundle"), bundle("manipulated_bundle"),
        )
    if kind == "bossiness":
        return axioms.BossinessWitness(
            names.agent_index(data["agent"]), prof(), _order_from_json(data["misreport"], names),
            alloc("before"), alloc("after"),
        )
    if kind == "neutrality":
        phi = tuple(names.object_index(data["phi"][o]) for o in names.objects)
        return axioms.NeutralityWitness(prof(), phi, alloc("renamed_outcome"), alloc("outcome_of_renamed"))
    if kind == "pareto":
        p = None if data["profile"] is None else prof()
        return axioms.ParetoWitness(alloc("allocation"), alloc("dominating"), p)
    coalition = tuple(names.agent_index(a) for a in data["coalition"])
    reports = tuple(_order_from_json(data["reports"][names.agents[a]], names) for a in coalition)
    if kind == "group":
        return axioms.GroupWitness(coalition, prof(), reports, alloc("before"), alloc("after"))
    if kind == "reallocation":
        return axioms.ReallocationWitness(
            coalition, prof(), reports, alloc("before"), alloc("reported"), alloc("redistributed")
        )
    raise ValidationError(f"unknown witness type {kind!r}")


# ---------------------------------------------------------------------------
# mechanisms


def parse_agent_list(text_or_list, names: Names) -> tuple[int, ...]:
    items = text_or_list.split(",") if isinstance(text_or_list, str) else text_or_list
    return tuple(names.agent_index(str(a).strip()) for a in items)


def parse_quota(text_or_list) -> Quota:
    items = text_or_list.split(",") if isinstance(text_or_list, str) else text_or_list
    try:
        return Quota(tuple(int(str(x).strip()) for x in items))
    except ValueError:
        raise ValidationError(f"bad quota {text_or_list!r}") from None


def mechanism_from_json(spec: dict, names: Names, quota: Quota | None):
    """Build a callable mechanism from a JSON mechanism description."""
    kind = spec.get("kind", "sd")
    n, m = names.n, names.m
    if "quota" in spec:
        quota = parse_quota(spec["quota"])

    def need_quota():
        if quota is None:
            raise ValidationError(f"mechanism '{kind}' needs a quota")
        validate(quota, n, m)
        return quota

    if kind == "sd":
        q = need_quota()
        order = parse_agent_list(spec["order"], names) if spec.get("order") else tuple(range(len(q)))
        mech = SerialDictatorQuota(order, q)
    elif kind == "sequential":
        q = need_quota()
        first = names.agent_index(spec["first"])
        table = {}
        for entry in spec.get("table", []):
            prefix = tuple(frozenset(names.object_index(o) for o in b) for b in entry["history"])
            table[prefix] = parse_agent_list(entry["next"], names)
        default = parse_agent_list(spec.get("default", []), names)
        mech = SequentialDictatorQuota(DictatorPolicy(first, table, default), q)
    elif kind == "interleave":
        mech = Interleaving(PickingSequence(parse_agent_list(spec["sequence"], names)))
    elif kind in ("strict", "balanced", "draft"):
        turns = int(spec.get("turns", quota.total if quota is not None else m))
        if kind == "strict":
            seq = strict_alternation_seq(n, turns)
        elif kind == "balanced":
            seq = balanced_alternation_seq(n, turns)
        else:
            seq = draft_seq(parse_agent_list(spec["order"], names), turns)
        mech = Interleaving(seq)
    elif kind == "bossy":
        mech = BossyFixture(quota if quota is not None else Quota((2, 1, 1)), spec.get("branch", "reverse"))
    elif kind == "imposed":
        mech = Imposed(allocation_from_json(spec["allocation"], names))
    else:
        raise ValidationError(f"unknown mechanism kind {kind!r}")
    mech.validate(n, m)
    return mech


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class Report:
    command: dict
    instance_digest: str | None
    results: dict
    seed: int | None = None
    exhaustive: bool | None = None
    sampled: bool | None = None
    timing: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "command": self.command,
            "instance_digest": self.instance_digest,
            "results": self.results,
            "seed": self.seed,
            "exhaustive": self.exhaustive,
            "sampled": self.sampled,
        }
        if self.timing is not None:
            out["timing"] = self.timing
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> Report:
        return cls(
            data["command"], data["instance_digest"], data["results"], data.get("seed"),
            data.get("exhaustive"), data.get("sampled"), data.get("timing"),
        )

    @classmethod
    def from_json(cls, text: str) -> Report:
        return cls.from_dict(json.loads(text))
