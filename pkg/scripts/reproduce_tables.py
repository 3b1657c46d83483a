"""Print the exact RSDQ marginals for every fixture instance that carries a quota."""

import argparse
from pathlib import Path

from qmech.io import format_rational, load_instance
from qmech.randomized import rsdq_exact

ROOT = Path(__file__).resolve().parents[1] / "fixtures"


def show(path: Path) -> None:
    inst = load_instance(path)
    if inst.quota is None or inst.profile is None:
        return
    matrix, support = rsdq_exact(inst.profile, inst.quota)
    print(f"{path.name}: q={list(inst.quota.sizes)}, {len(support)} orderings")
    print("      " + " ".join(f"{o:>6}" for o in inst.names.objects))
    for agent, row in zip(inst.names.agents, matrix):
        print(f"{agent:>5} " + " ".join(f"{format_rational(x):>6}" for x in row))
    print()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("paths", nargs="*", type=Path)
    args = parser.parse_args()
    for path in args.paths or sorted(ROOT.glob("*.json")):
        try:
            show(path)
        except (ValueError, KeyError):
            continue


if __name__ == "__main__":
    main()
