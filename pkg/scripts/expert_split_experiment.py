#!/usr/bin/env python3
"""Measure how the number of experts sharing a rank window affects merged mAP.

Each trial splits the 50th-100th rarest categories into 1, 2, and 5 expert
groups.  Simulated per-category prediction quality degrades with the number
of categories an expert is responsible for, so finer splits should merge
into higher mAP, mirroring the smaller-groups-are-better trend.
"""

from __future__ import annotations

import argparse
import statistics

from detpipe.synthetic import expert_split_trial


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=20, help="number of trials")
    parser.add_argument(
        "--experts",
        type=int,
        nargs="+",
        default=[1, 2, 5],
        help="expert counts to compare (each must divide into the 50-category window)",
    )
    args = parser.parse_args()

    counts = tuple(args.experts)
    per_count: dict[int, list[float]] = {k: [] for k in counts}
    header = "  ".join(f"{k}-expert".rjust(9) for k in counts)
    print(f"{'seed':>4}  {header}")
    for seed in range(args.seeds):
        result = expert_split_trial(seed, expert_counts=counts)
        for k in counts:
            per_count[k].append(result[k])
        print(f"{seed:>4}  " + "  ".join(f"{result[k]:>9.4f}" for k in counts))

    print()
    for k in counts:
        categories = 50 // k
        print(
            f"{categories:>3} categories per expert ({k} experts): "
            f"mean mAP {statistics.mean(per_count[k]):.4f}"
        )


if __name__ == "__main__":
    main()
