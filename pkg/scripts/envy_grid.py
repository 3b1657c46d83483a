"""Count envy and unequal treatment in exact RSDQ lotteries over a profile grid."""

import argparse

from qmech.core import valid_quotas
from qmech.randomized import ete_in_counts, envy_in_counts, rsdq_count_table


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--agents", type=int, nargs="+", default=[2, 3])
    parser.add_argument("--objects", type=int, nargs="+", default=[3, 4])
    args = parser.parse_args()
    for n in args.agents:
        for m in args.objects:
            for q in valid_quotas(n, m):
                space, counts, _ = rsdq_count_table(n, m, q)
                envy, ete = envy_in_counts(space, counts), ete_in_counts(space, counts)
                status = "clean" if envy is None and ete is None else f"envy={envy} ete={ete}"
                print(f"n={n} m={m} q={list(q.sizes)} profiles={space.size}: {status}")


if __name__ == "__main__":
    main()
