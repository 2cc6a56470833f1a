#!/usr/bin/env python3
"""Seed sweep of episodes-to-contraction, paired outcome-only vs epistemic.

Emits CSV: seed, lambda, episodes_to_contraction (inf = never contracted).
"""

import argparse
import csv
import sys
from pathlib import Path

from ermkit.experiments import episodes_to_contraction
from ermkit.scenario import load_scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default="scenarios/dock.json")
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--erm-episodes", type=int, default=50)
    parser.add_argument("--baseline-episodes", type=int, default=500)
    args = parser.parse_args()

    scenario = load_scenario(Path(args.scenario))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["seed", "lambda", "episodes_to_contraction"])
    for seed in range(args.seeds):
        erm = episodes_to_contraction(scenario, 1.0, args.erm_episodes, seed)
        base = episodes_to_contraction(scenario, 0.0, args.baseline_episodes, seed)
        writer.writerow([seed, 1.0, erm])
        writer.writerow([seed, 0.0, base])
    return 0


if __name__ == "__main__":
    sys.exit(main())
