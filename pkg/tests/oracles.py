"""Independent reference implementations shared by the unit and acceptance tests."""

import math

import numpy as np

from dicerec.model import TABLES, CausalEmbeddings
from dicerec.sampler import Triplets


def textbook_dcor(X, Y):
    """Distance correlation straight from the definition, with explicit loops."""
    n = len(X)

    def centered(Z):
        a = [[math.sqrt(sum((Z[i][k] - Z[j][k]) ** 2 for k in range(len(Z[0])))) for j in range(n)]
             for i in range(n)]
        row = [sum(r) / n for r in a]
        grand = sum(row) / n
        return [[a[i][j] - row[i] - row[j] + grand for j in range(n)] for i in range(n)]

    A, B = centered(np.asarray(X).tolist()), centered(np.asarray(Y).tolist())
    cov = sum(A[i][j] * B[i][j] for i in range(n) for j in range(n)) / n ** 2
    vx = sum(v * v for r in A for v in r) / n ** 2
    vy = sum(v * v for r in B for v in r) / n ** 2
    if vx <= 0 or vy <= 0:
        return 0.0
    return math.sqrt(max(cov, 0.0) / math.sqrt(vx * vy))


def random_problem(rng, n_users=5, n_items=9, d=8, batch=12, scale=0.5):
    emb = CausalEmbeddings(*(rng.normal(0, scale, (n, d))
                             for n in (n_users, n_users, n_items, n_items)))
    u = rng.integers(0, n_users, batch)
    i = rng.integers(0, n_items, batch)
    j = (i + rng.integers(1, n_items, batch)) % n_items
    case = rng.integers(0, 2, batch).astype(np.int8)
    return emb, Triplets(u, i, j, case)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _scores(T, ut, it, users, items):
    return np.einsum("sbd,sbd->sb", T[ut][:, users], T[it][:, items])


def _stacked_dcor(X, Y):
    def centered(Z):
        a = np.sqrt(((Z[:, :, None, :] - Z[:, None, :, :]) ** 2).sum(-1))
        return a - a.mean(1, keepdims=True) - a.mean(2, keepdims=True) + a.mean((1, 2), keepdims=True)

    A, B = centered(X), centered(Y)
    cov, vx, vy = (A * B).mean((1, 2)), (A * A).mean((1, 2)), (B * B).mean((1, 2))
    return np.sqrt(np.maximum(cov, 0) / np.sqrt(vx * vy))


def reference_loss(T, batch, part, alpha=0.0, beta=0.0, kind="dcor"):
    """Loss values for a stack of parameter settings.

    ``T`` maps table name to an array of shape (S, rows, d); the result has
    shape (S,). Written from the loss definitions, independently of the
    package code.
    """
    u, i, j, o2 = batch.user, batch.pos, batch.neg, batch.case == 1
    s_int_i, s_int_j = _scores(T, "user_int", "item_int", u, i), _scores(T, "user_int", "item_int", u, j)
    s_con_i, s_con_j = _scores(T, "user_con", "item_con", u, i), _scores(T, "user_con", "item_con", u, j)
    if part == "click":
        return _softplus((s_int_j + s_con_j) - (s_int_i + s_con_i)).sum(1)
    if part == "interest":
        return _softplus(s_int_j - s_int_i)[:, o2].sum(1)
    if part == "conformity":
        return np.where(o2, _softplus(s_con_i - s_con_j), _softplus(s_con_j - s_con_i)).sum(1)
    if part == "conformity-literal":
        return np.where(o2, -1.0, 1.0) @ _softplus(s_con_j - s_con_i).T
    if part == "discrepancy":
        total = 0.0
        for entity, rows in (("user", np.unique(u)), ("item", np.unique(np.concatenate([i, j])))):
            X, Y = T[f"{entity}_int"][:, rows], T[f"{entity}_con"][:, rows]
            if kind == "dcor":
                total = total + _stacked_dcor(X, Y)
            elif kind == "l1inv":
                total = total - np.abs(X - Y).sum(-1).mean(-1)
            else:
                total = total - np.sqrt(((X - Y) ** 2).sum(-1)).mean(-1)
        return total
    assert part == "total"
    out = reference_loss(T, batch, "click")
    out = out + alpha * (reference_loss(T, batch, "interest") + reference_loss(T, batch, "conformity"))
    return out + beta * reference_loss(T, batch, "discrepancy", kind=kind)


def finite_difference_error(analytic, emb, value_fn, h=1e-4):
    """Max-norm relative error between analytic gradients and central differences.

    ``analytic`` is the package BatchLoss; ``value_fn(T)`` evaluates the loss
    on a stack of perturbed tables (see :func:`reference_loss`). Every entry
    of every table is perturbed by +h and -h.
    """
    base = {n: emb.tables[n] for n in TABLES}
    sizes = [base[n].size for n in TABLES]
    P = sum(sizes)
    stacked = {n: np.repeat(base[n][None], 2 * P, axis=0) for n in TABLES}
    offset = 0
    for n, size in zip(TABLES, sizes):
        flat = stacked[n].reshape(2 * P, -1)
        k = np.arange(size)
        flat[offset + k, k] += h
        flat[P + offset + k, k] -= h
        offset += size
    vals = value_fn(stacked)
    numeric = (vals[:P] - vals[P:]) / (2 * h)
    dense = np.concatenate([analytic.dense(n, base[n].shape).ravel() for n in TABLES])
    scale = max(float(np.abs(numeric).max()), float(np.abs(dense).max()), 1e-12)
    return float(np.abs(dense - numeric).max()) / scale


def brute_recall(topk, relevant):
    return len(set(topk) & set(relevant)) / len(set(relevant))


def brute_hit(topk, relevant):
    return 1.0 if set(topk) & set(relevant) else 0.0


def brute_ndcg(topk, relevant):
    rel = set(relevant)
    dcg = sum(1.0 / math.log2(r + 2) for r, item in enumerate(topk) if item in rel)
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(len(rel), len(topk))))
    return dcg / idcg


def brute_iou(a, b):
    a, b = set(a), set(b)
    return len(a & b) / len(a | b) if a | b else 0.0


def brute_topk(scores, k, exclude=()):
    cand = [i for i in range(len(scores)) if i not in set(exclude)]
    return sorted(cand, key=lambda i: (-scores[i], i))[:k]
