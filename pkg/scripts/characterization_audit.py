"""Audit every serial dictatorship with quotas on a small grid.

Each (ordering, quota) is tabulated once and checked for strategyproofness,
non-bossiness, neutrality and Pareto efficiency.  Any witness is printed.
"""

import argparse
import itertools
import time

from qmech import axioms
from qmech.core import valid_quotas
from qmech.mechanisms import SerialDictatorQuota
from qmech.space import OutcomeTable

CHECKS = {
    "sp": axioms.manipulation_in_table,
    "nonbossy": axioms.bossiness_in_table,
    "neutral": axioms.neutrality_in_table,
    "pareto": axioms.pareto_in_table,
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--max-agents", type=int, default=3)
    parser.add_argument("--max-objects", type=int, default=4)
    args = parser.parse_args()
    start = time.perf_counter()
    configs = bad = 0
    for n in range(1, args.max_agents + 1):
        for m in range(1, args.max_objects + 1):
            for q in valid_quotas(n, m):
                for order in itertools.permutations(range(n), len(q)):
                    table = OutcomeTable.build(SerialDictatorQuota(order, q), n, m)
                    configs += 1
                    for name, check in CHECKS.items():
                        w = check(table)
                        if w is not None:
                            bad += 1
                            print(f"n={n} m={m} f={order} q={q.sizes} {name}: {w}")
    print(f"{configs} configurations, {bad} violations, {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
