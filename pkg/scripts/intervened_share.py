"""How much intervened training data helps: DICE and MF as the intervened share grows.

The split reserves a larger intervened pool (half of all records) so that
about 20% of the records sit in intervened training. Each run draws a
prefix of that partition, so validation and test stay fixed. The pool size
is random, so keep the largest share a little under 0.2.

    python scripts/intervened_share.py --shares 0,0.05,0.1,0.15
"""
import argparse

from dicerec.baselines import train_baseline
from dicerec.evaluator import evaluate
from dicerec.experiments import BUDGET, PLANTED
from dicerec.trainer import fit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shares", default="0,0.05,0.1,0.15")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    split = PLANTED.split(args.seed, intervened_fraction=0.5, intervened_allocation=(0.2, 0.1, 0.2))
    print(f"{'share':>6}{'DICE N@20':>11}{'MF N@20':>10}")
    for share in (float(x) for x in args.shares.split(",")):
        dice = fit(split, BUDGET.dice(args.seed, intervened_share=share)).model
        mf = train_baseline("mf", split, BUDGET.baseline(args.seed, intervened_share=share)).model
        nd = evaluate(dice, split, ks=(20,)).metrics["20"]["ndcg"]
        nm = evaluate(mf, split, ks=(20,)).metrics["20"]["ndcg"]
        print(f"{share:>6.2f}{nd:>11.4f}{nm:>10.4f}", flush=True)


if __name__ == "__main__":
    main()
