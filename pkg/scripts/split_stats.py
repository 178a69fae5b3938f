"""Pool sizes and popularity entropy of the intervened split over many seeds.

    python scripts/split_stats.py --seeds 100
"""
import argparse

import numpy as np

from dicerec.splitter import PARTITIONS, SplitConfig, draw_split
from dicerec.synthetic import zipf_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=2000)
    ap.add_argument("--items", type=int, default=500)
    ap.add_argument("--interactions", type=int, default=100_000)
    ap.add_argument("--exponent", type=float, default=1.0)
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()

    table = zipf_table(args.users, args.items, args.interactions, args.exponent, seed=0)
    sizes = {p: [] for p in PARTITIONS}
    ent = {p: [] for p in PARTITIONS}
    for seed in range(args.seeds):
        s = draw_split(table, SplitConfig(seed=seed))
        for p, e in s.entropy_report().items():
            sizes[p].append(s.size(p) / len(table))
            ent[p].append(np.nan if e is None else e)
    print(f"{len(table)} records, {args.seeds} split seeds")
    print(f"{'partition':<18}{'share':>10}{'entropy':>10}")
    for p in PARTITIONS:
        print(f"{p:<18}{np.mean(sizes[p]):>10.4f}{np.nanmean(ent[p]):>10.3f}")
    gap = np.array(ent["test"]) > np.array(ent["train_normal"])
    print(f"entropy(test) > entropy(train_normal) in {gap.sum()}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
