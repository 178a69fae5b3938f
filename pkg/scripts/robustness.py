"""DICE against the baselines on the planted-factor split, averaged over seeds.

    python scripts/robustness.py --seeds 3 --models dice,mf,ips-cn,cause
"""
import argparse
import time

import numpy as np

from dicerec.baselines import train_baseline
from dicerec.evaluator import evaluate
from dicerec.experiments import BUDGET, PLANTED
from dicerec.trainer import fit


def run(name, split, seed):
    if name == "dice":
        return fit(split, BUDGET.dice(seed)).model
    return train_baseline(name, split, BUDGET.baseline(seed)).model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--models", default="itempop,mf,ips-cn,cause,dice")
    args = ap.parse_args()
    models = args.models.split(",")
    scores = {m: [] for m in models}
    for seed in range(args.seeds):
        split = PLANTED.split(seed)
        for m in models:
            t = time.perf_counter()
            rep = evaluate(run(m, split, seed), split, ks=(20, 50)).metrics
            scores[m].append([rep[k][x] for k in ("20", "50") for x in ("recall", "ndcg")])
            print(f"seed {seed} {m:<9} R@20 {scores[m][-1][0]:.4f} N@20 {scores[m][-1][1]:.4f} "
                  f"({time.perf_counter() - t:.0f}s)", flush=True)
    ref = np.mean(scores["mf"], axis=0) if "mf" in scores else None
    print(f"\n{'model':<10}{'R@20':>8}{'N@20':>8}{'R@50':>8}{'N@50':>8}  N@20 vs MF")
    for m in models:
        avg = np.mean(scores[m], axis=0)
        rel = f"{avg[1] / ref[1] - 1:+.1%}" if ref is not None else ""
        print(f"{m:<10}" + "".join(f"{v:>8.4f}" for v in avg) + f"  {rel}")


if __name__ == "__main__":
    main()
