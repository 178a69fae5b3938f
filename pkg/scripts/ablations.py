"""DICE ablations on the planted-factor split: sampling, curriculum, discrepancy, conformity task.

    python scripts/ablations.py --seeds 2
"""
import argparse

import numpy as np

from dicerec.evaluator import evaluate
from dicerec.experiments import BUDGET, PLANTED
from dicerec.trainer import fit

VARIANTS = {
    "dice": {},
    "random-negatives": {"strategy": "random"},
    "no-curriculum": {"curriculum": False},
    "l1inv": {"discrepancy": "l1inv"},
    "l2inv": {"discrepancy": "l2inv"},
    "no-discrepancy": {"beta": 0.0},
    "no-conformity-task": {"conformity_task": False},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=2)
    ap.add_argument("--only", default="", help="comma-separated subset of " + ",".join(VARIANTS))
    args = ap.parse_args()
    names = args.only.split(",") if args.only else list(VARIANTS)
    rows = {n: [] for n in names}
    for seed in range(args.seeds):
        split = PLANTED.split(seed)
        for n in names:
            model = fit(split, BUDGET.dice(seed, **VARIANTS[n])).model
            m = evaluate(model, split, ks=(20, 50)).metrics
            rows[n].append((m["20"]["recall"], m["20"]["ndcg"], m["50"]["recall"], m["50"]["ndcg"]))
            print(f"seed {seed} {n:<20} R@20 {rows[n][-1][0]:.4f}", flush=True)
    print(f"\n{'variant':<20}{'R@20':>8}{'N@20':>8}{'R@50':>8}{'N@50':>8}")
    for n in names:
        print(f"{n:<20}" + "".join(f"{v:>8.4f}" for v in np.mean(rows[n], axis=0)))


if __name__ == "__main__":
    main()
