"""IOU of DICE's interest, conformity and full rankings with ItemPop, plus an embedding export.

Writes ``iou.csv`` and the embedding files (with popularity terciles for
external plotting) into ``--out``.

    python scripts/disentangle.py --out runs/disentangle
"""
import argparse
from pathlib import Path

from dicerec.baselines import train_baseline
from dicerec.evaluator import export_embeddings, iou_with_itempop, write_iou_csv
from dicerec.experiments import BUDGET, PLANTED
from dicerec.trainer import fit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/disentangle")
    ap.add_argument("--reference", default="global", choices=("global", "recommended"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    split = PLANTED.split(args.seed)
    dice = fit(split, BUDGET.dice(args.seed)).model
    mf = train_baseline("mf", split, BUDGET.baseline(args.seed)).model
    curves = {f"dice/{v}": iou_with_itempop(dice, split, v, reference=args.reference)
              for v in ("full", "int", "con")}
    curves["mf/full"] = iou_with_itempop(mf, split, reference=args.reference)
    write_iou_csv(curves, out / "iou.csv")
    export_embeddings(dice, split.train_popularity(), out)

    ks = [p["k"] for p in curves["mf/full"]]
    print("pooled IOU with ItemPop")
    print(f"{'K':>5}" + "".join(f"{label:>10}" for label in curves))
    for j, k in enumerate(ks):
        print(f"{k:>5}" + "".join(f"{curves[label][j]['iou_pooled']:>10.3f}" for label in curves))
    print(f"wrote {out / 'iou.csv'} and embeddings")


if __name__ == "__main__":
    main()
