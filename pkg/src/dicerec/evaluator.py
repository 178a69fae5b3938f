"""Top-K metrics on the intervened test data, IOU with ItemPop, and embedding export."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Variant, top_k
from .splitter import SplitBundle

DEFAULT_KS = (20, 50)
GROUPS = ("unpopular", "normal", "popular")


def _require_relevant(relevant) -> set:
    rel = set(relevant)
    if not rel:
        raise ValueError("relevant set is empty")
    return rel


def recall_at_k(topk, relevant) -> float:
    rel = _require_relevant(relevant)
    return len(set(topk) & rel) / len(rel)


def hit_ratio_at_k(topk, relevant) -> float:
    rel = _require_relevant(relevant)
    return 1.0 if any(i in rel for i in topk) else 0.0


def ndcg_at_k(topk, relevant) -> float:
    rel = _require_relevant(relevant)
    dcg = 0.0
    for r, item in enumerate(topk, start=1):
        if item in rel:
            dcg += 1.0 / math.log2(r + 1)
    idcg = 0.0
    for r in range(1, min(len(rel), len(topk)) + 1):
        idcg += 1.0 / math.log2(r + 1)
    return dcg / idcg if idcg > 0 else 0.0


def iou(a, b) -> float:
    a, b = set(a), set(b)
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def group_items(users, items, n_users: int) -> list[np.ndarray]:
    order = np.argsort(users, kind="stable")
    bounds = np.searchsorted(users[order], np.arange(n_users + 1))
    it = items[order]
    return [np.sort(it[bounds[u]:bounds[u + 1]]) for u in range(n_users)]


class PopularityScorer:
    """ItemPop as a scorer: every user gets the training-popularity vector."""

    kind = "itempop"

    def __init__(self, popularity):
        self.popularity = np.asarray(popularity, dtype=np.float64)

    @property
    def n_items(self) -> int:
        return len(self.popularity)

    def score_matrix(self, users, variant=Variant.FULL) -> np.ndarray:
        return np.broadcast_to(self.popularity, (len(users), len(self.popularity)))


def itempop_rank(popularity, k: int) -> list[int]:
    popularity = np.asarray(popularity)
    if k > len(popularity):
        raise ValueError(f"K={k} exceeds the {len(popularity)} items")
    return top_k(popularity.astype(np.float64), k).tolist()


@dataclass
class MetricsReport:
    model: str
    variant: str
    ks: tuple
    metrics: dict            # str(K) -> {"recall", "hit_ratio", "ndcg"}
    n_users: int
    n_skipped: int
    diagnostics: dict = field(default_factory=dict)
    per_user: dict | None = None

    def to_dict(self) -> dict:
        d = {
            "model": self.model,
            "variant": self.variant,
            "ks": list(self.ks),
            "metrics": self.metrics,
            "n_users": self.n_users,
            "n_skipped": self.n_skipped,
            "diagnostics": self.diagnostics,
        }
        if self.per_user is not None:
            d["per_user"] = self.per_user
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_rows(self) -> list[tuple]:
        return [(self.model, self.variant, int(k), name, self.metrics[str(k)][name])
                for k in self.ks for name in ("recall", "hit_ratio", "ndcg")]

    @classmethod
    def from_dict(cls, d) -> "MetricsReport":
        return cls(d["model"], d["variant"], tuple(d["ks"]), d["metrics"], d["n_users"],
                   d["n_skipped"], d.get("diagnostics", {}), d.get("per_user"))


def write_reports_csv(reports, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "variant", "k", "metric", "value"])
    for rep in reports:
        for row in rep.csv_rows():
            w.writerow(row[:4] + (repr(float(row[4])),))
    Path(path).write_text(buf.getvalue())


def _user_batches(users, size=512):
    for s in range(0, len(users), size):
        yield users[s:s + size]


def recommend(model, users, train_lists, k: int, variant=Variant.FULL, extra_exclude=None) -> np.ndarray:
    """Top-k items per user with that user's training items excluded."""
    users = np.asarray(users, dtype=np.int64)
    out = np.empty((len(users), k), dtype=np.int64)
    n_items = model.n_items
    row = 0
    for ub in _user_batches(users):
        s = np.array(model.score_matrix(ub, variant), dtype=np.float64)
        mask = np.zeros(s.shape, dtype=bool)
        for r, u in enumerate(ub):
            mask[r, train_lists[u]] = True
            if extra_exclude is not None:
                mask[r, extra_exclude[u]] = True
        avail = n_items - mask.sum(axis=1)
        if (avail < k).any():
            raise ValueError(f"K={k} exceeds available candidates for some user")
        s[mask] = -np.inf
        out[row:row + len(ub)] = np.argsort(-s, axis=1, kind="stable")[:, :k]
        row += len(ub)
    return out


def _ideal_dcg(max_k: int) -> np.ndarray:
    idcg = np.zeros(max_k + 1)
    acc = 0.0
    for r in range(1, max_k + 1):
        acc += 1.0 / math.log2(r + 1)
        idcg[r] = acc
    return idcg


def evaluation_users(split: SplitBundle, partition: str = "test"):
    """(evaluated users, skipped count, train item lists, target item lists)."""
    tu = np.concatenate([split.records("train_normal")[0], split.records("train_intervened")[0]])
    ti = np.concatenate([split.records("train_normal")[1], split.records("train_intervened")[1]])
    train_lists = group_items(tu, ti, split.n_users)
    pu, pi = split.records(partition)
    target_lists = group_items(pu, pi, split.n_users)
    has_target = np.array([len(x) > 0 for x in target_lists], dtype=bool)
    has_train = np.array([len(x) > 0 for x in train_lists], dtype=bool)
    users = np.flatnonzero(has_target & has_train)
    skipped = int((has_target & ~has_train).sum())
    return users, skipped, train_lists, target_lists


def evaluate(model, split: SplitBundle, variant=Variant.FULL, ks=DEFAULT_KS, partition: str = "test",
             exclude_validation: bool = False, name: str | None = None, keep_per_user: bool = False,
             iou_ks=None, iou_reference: str = "global") -> MetricsReport:
    """Average Recall/HitRatio/NDCG@K over users with test and training interactions.

    Candidates are all items except the user's training items (and validation
    items when ``exclude_validation``). Cold-start test items stay in the
    candidate set.
    """
    variant = Variant.parse(variant)
    ks = tuple(sorted(int(k) for k in ks))
    users, skipped, train_lists, target_lists = evaluation_users(split, partition)
    if len(users) == 0:
        raise ValueError(f"no evaluable users in partition {partition!r}")
    extra = None
    if exclude_validation and partition != "validation":
        vu, vi = split.records("validation")
        extra = group_items(vu, vi, split.n_users)
    kmax = max(ks)
    recs = recommend(model, users, train_lists, kmax, variant, extra)

    n_rel = np.array([len(target_lists[u]) for u in users])
    hits = np.zeros(recs.shape, dtype=bool)
    for r, u in enumerate(users):
        hits[r] = np.isin(recs[r], target_lists[u])
    discounts = 1.0 / np.log2(np.arange(2, kmax + 2))
    idcg = _ideal_dcg(kmax)
    metrics, per_user = {}, {}
    for k in ks:
        h = hits[:, :k]
        nh = h.sum(axis=1)
        recall = nh / n_rel
        hr = (nh > 0).astype(np.float64)
        ndcg = (h * discounts[:k]).sum(axis=1) / idcg[np.minimum(n_rel, k)]
        metrics[str(k)] = {"recall": float(recall.mean()), "hit_ratio": float(hr.mean()),
                           "ndcg": float(ndcg.mean())}
        if keep_per_user:
            per_user[str(k)] = {"recall": recall.tolist(), "hit_ratio": hr.tolist(), "ndcg": ndcg.tolist()}

    diagnostics = {"entropy": split.entropy_report()}
    if iou_ks:
        # cutoffs some user cannot fill are skipped rather than failing the whole report
        n_excl = np.array([len(train_lists[u]) + (len(extra[u]) if extra is not None else 0) for u in users])
        feasible = [k for k in iou_ks if k <= model.n_items - n_excl.max()]
        diagnostics["iou_itempop"] = (iou_curve_from_recs(recs, split.train_popularity(), feasible, users,
                                                          train_lists, model, variant, iou_reference, extra)
                                      if feasible else [])
        skipped_ks = sorted(set(iou_ks) - set(feasible))
        if skipped_ks:
            diagnostics["iou_skipped_ks"] = skipped_ks
    return MetricsReport(name or getattr(model, "kind", "model"), variant.value, ks, metrics,
                         int(len(users)), skipped, diagnostics,
                         {"users": users.tolist(), **per_user} if keep_per_user else None)


IOU_REFERENCES = ("global", "recommended")


def iou_curve_from_recs(recs, popularity, ks, users, train_lists, model, variant,
                        reference: str = "global", extra_exclude=None):
    """IOU of the model's top-K lists with ItemPop's, per K.

    ``reference="global"`` compares against the K most popular items,
    regardless of what each user has seen. ``"recommended"`` compares against
    what ItemPop actually recommends to the same users under the same
    candidate exclusion, so that ItemPop scores 1 against itself.
    """
    if reference not in IOU_REFERENCES:
        raise ValueError(f"unknown IOU reference {reference!r}")
    kmax = max(ks)
    if recs.shape[1] < kmax:
        recs = recommend(model, users, train_lists, kmax, variant, extra_exclude)
    if reference == "recommended":
        ref = recommend(PopularityScorer(popularity), users, train_lists, kmax, extra_exclude=extra_exclude)
    out = []
    for k in ks:
        topk = recs[:, :k]
        if reference == "recommended":
            ref_k = ref[:, :k]
            B = set(np.unique(ref_k).tolist())
            per_user = float(np.mean([iou(a.tolist(), b.tolist()) for a, b in zip(topk, ref_k)]))
        else:
            B = set(itempop_rank(popularity, k))
            per_user = float(np.mean([iou(row.tolist(), B) for row in topk]))
        A = set(np.unique(topk).tolist())
        out.append({"k": int(k), "iou_pooled": iou(A, B), "iou_per_user": per_user})
    return out


def iou_with_itempop(model, split: SplitBundle, variant=Variant.FULL, k_range=range(10, 101, 10),
                     partition: str = "test", reference: str = "global") -> list[dict]:
    """IOU between the pooled top-K sets of evaluated users and ItemPop's."""
    variant = Variant.parse(variant)
    users, _, train_lists, _ = evaluation_users(split, partition)
    ks = list(k_range)
    recs = recommend(model, users, train_lists, max(ks), variant)
    return iou_curve_from_recs(recs, split.train_popularity(), ks, users, train_lists, model, variant,
                               reference)


def write_iou_csv(curves: dict, path) -> None:
    """``curves`` maps a label (model/variant) to an iou curve."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "k", "iou_pooled", "iou_per_user"])
    for label in sorted(curves):
        for pt in curves[label]:
            w.writerow([label, pt["k"], repr(pt["iou_pooled"]), repr(pt["iou_per_user"])])
    Path(path).write_text(buf.getvalue())


# --- embedding export --------------------------------------------------------

def popularity_groups(popularity) -> np.ndarray:
    """Tercile labels by popularity rank (ties by item index): 0 unpopular, 1 normal, 2 popular."""
    p = np.asarray(popularity)
    order = np.argsort(p, kind="stable")
    labels = np.empty(len(p), dtype=np.int64)
    for g, chunk in enumerate(np.array_split(order, 3)):
        labels[chunk] = g
    return labels


def _fmt(x: float) -> str:
    return repr(float(x))


def export_embeddings(emb, popularity, destination, include_users: bool = False) -> dict:
    """Write embeddings.csv (one row per entity and cause) and items.csv (popularity + group)."""
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    d = emb.d
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["entity", "id", "cause", "d"] + [f"e{k}" for k in range(d)])
    entities = (("user", "item") if include_users else ("item",))
    for ent in entities:
        for cause, tab in (("interest", f"{ent}_int"), ("conformity", f"{ent}_con")):
            T = emb.tables[tab]
            for idx in range(T.shape[0]):
                w.writerow([ent, idx, cause, d] + [_fmt(x) for x in T[idx]])
    (dest / "embeddings.csv").write_text(buf.getvalue())

    groups = popularity_groups(popularity)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["item", "popularity", "group"])
    for i, (p, g) in enumerate(zip(np.asarray(popularity).tolist(), groups.tolist())):
        w.writerow([i, p, GROUPS[g]])
    (dest / "items.csv").write_text(buf.getvalue())
    return {"embeddings": str(dest / "embeddings.csv"), "items": str(dest / "items.csv")}


def read_embeddings_csv(path) -> dict:
    """Inverse of export_embeddings: {(entity, cause): matrix}."""
    rows: dict = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for ent, idx, cause, d, *vals in r:
            rows.setdefault((ent, cause), []).append((int(idx), [float(v) for v in vals]))
    return {key: np.array([v for _, v in sorted(lst)]) for key, lst in rows.items()}
