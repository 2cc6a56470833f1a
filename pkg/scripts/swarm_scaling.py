#!/usr/bin/env python3
"""Rounds until the quorum graph matches the true edge set, by swarm size."""

import argparse
import statistics
import sys
from pathlib import Path

from ermkit.experiments import rounds_to_correct_set
from ermkit.graph import CausalClaim
from ermkit.scenario import load_scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default="scenarios/swarm.json")
    parser.add_argument("--sizes", type=int, nargs="+", default=[1, 2, 4, 8])
    parser.add_argument("--quorum", type=float, default=0.5)
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--max-rounds", type=int, default=12)
    args = parser.parse_args()

    scenario = load_scenario(Path(args.scenario))
    target = {CausalClaim("Z", "Y")}
    print("agents\tmedian_rounds\tmean_rounds")
    for m in args.sizes:
        rounds = [
            rounds_to_correct_set(scenario, m, args.quorum, target, args.max_rounds, seed)
            for seed in range(args.seeds)
        ]
        finite = [r for r in rounds if r != float("inf")]
        median = statistics.median(rounds)
        mean = statistics.mean(finite) if finite else float("inf")
        print(f"{m}\t{median:g}\t{mean:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
