"""Pairwise task losses with hand-derived gradients.

All batch losses are sums over triplets. Gradients are returned sparsely as
``{table_name: (row_indices, row_gradients)}`` with unique row indices.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .sampler import Triplets


class Discrepancy(str, enum.Enum):
    L1INV = "l1inv"
    L2INV = "l2inv"
    DCOR = "dcor"


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bpr(score_pos, score_neg):
    """-ln sigmoid(score_pos - score_neg), evaluated as softplus(score_neg - score_pos)."""
    return softplus(np.subtract(score_neg, score_pos))


def bpr_grad(score_pos, score_neg):
    """(d/d score_pos, d/d score_neg) of :func:`bpr`."""
    g = sigmoid(np.subtract(score_neg, score_pos))
    return -g, g


def scatter_rows(rows, values):
    """Sum ``values`` rows that share an index; returns (unique_rows, sums)."""
    rows = np.asarray(rows, dtype=np.int64)
    uniq, inv = np.unique(rows, return_inverse=True)
    out = np.zeros((uniq.size, values.shape[1]))
    np.add.at(out, inv, values)
    return uniq, out


@dataclass
class BatchLoss:
    value: float = 0.0
    grads: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)

    def add(self, other: "BatchLoss", weight: float = 1.0) -> "BatchLoss":
        self.value += weight * other.value
        if weight != 0:
            for name, (rows, g) in other.grads.items():
                self.add_grad(name, rows, weight * g)
        return self

    def add_grad(self, name: str, rows, g) -> None:
        if name in self.grads:
            r0, g0 = self.grads[name]
            rows = np.concatenate([r0, rows])
            g = np.vstack([g0, g])
        self.grads[name] = scatter_rows(rows, g)

    def dense(self, name: str, shape) -> np.ndarray:
        out = np.zeros(shape)
        if name in self.grads:
            rows, g = self.grads[name]
            out[rows] += g
        return out


def pairwise_loss(U, I, J, direction=None, coef=None):
    """Sum of coef * softplus(direction * (<U,J> - <U,I>)) and its row gradients.

    ``direction`` of +1 is ordinary BPR (prefer I over J); -1 swaps the
    preference. ``coef`` multiplies each term (sign flips or instance weights).
    Returns (value, dU, dI, dJ).
    """
    n = len(U)
    direction = np.ones(n) if direction is None else np.asarray(direction, dtype=np.float64)
    coef = np.ones(n) if coef is None else np.asarray(coef, dtype=np.float64)
    diff = np.einsum("ij,ij->i", U, J) - np.einsum("ij,ij->i", U, I)
    z = direction * diff
    value = float((coef * softplus(z)).sum())
    h = (coef * direction * sigmoid(z))[:, None]  # dL/d diff
    return value, h * (J - I), -h * U, h * U


def _triplet_grads(loss: BatchLoss, utable, itable, batch, rows_mask, dU, dI, dJ) -> None:
    u = batch.user[rows_mask]
    loss.add_grad(utable, u, dU)
    loss.add_grad(itable, np.concatenate([batch.pos[rows_mask], batch.neg[rows_mask]]), np.vstack([dI, dJ]))


def loss_conformity(batch: Triplets, emb, literal_o2: bool = False, weights=None) -> BatchLoss:
    """BPR on conformity scores: O1 prefers the positive, O2 prefers the negative.

    With ``literal_o2`` the O2 term is the negated ordinary BPR instead of
    the argument-swapped one (unbounded below; ablation only).
    """
    T = emb.tables
    o2 = batch.is_o2
    if literal_o2:
        direction = np.ones(len(batch))
        coef = np.where(o2, -1.0, 1.0)
    else:
        direction = np.where(o2, -1.0, 1.0)
        coef = np.ones(len(batch))
    if weights is not None:
        coef = coef * weights
    v, dU, dI, dJ = pairwise_loss(T["user_con"][batch.user], T["item_con"][batch.pos],
                                  T["item_con"][batch.neg], direction, coef)
    out = BatchLoss(v)
    if len(batch):
        _triplet_grads(out, "user_con", "item_con", batch, slice(None), dU, dI, dJ)
    return out


def loss_interest(batch: Triplets, emb, weights=None) -> BatchLoss:
    """Ordinary BPR on interest scores, O2 triplets only."""
    T = emb.tables
    o2 = batch.is_o2
    out = BatchLoss(0.0)
    if not o2.any():
        return out
    coef = None if weights is None else np.asarray(weights)[o2]
    v, dU, dI, dJ = pairwise_loss(T["user_int"][batch.user[o2]], T["item_int"][batch.pos[o2]],
                                  T["item_int"][batch.neg[o2]], coef=coef)
    out.value = v
    _triplet_grads(out, "user_int", "item_int", batch, o2, dU, dI, dJ)
    return out


def loss_click(batch: Triplets, emb, weights=None) -> BatchLoss:
    """BPR on the summed score (equivalently on concatenated embeddings), all triplets."""
    T = emb.tables
    u, i, j = batch.user, batch.pos, batch.neg
    U = np.hstack([T["user_int"][u], T["user_con"][u]])
    I = np.hstack([T["item_int"][i], T["item_con"][i]])
    J = np.hstack([T["item_int"][j], T["item_con"][j]])
    v, dU, dI, dJ = pairwise_loss(U, I, J, coef=weights)
    out = BatchLoss(v)
    if len(batch):
        d = T["user_int"].shape[1]
        for half, suffix in ((slice(None, d), "int"), (slice(d, None), "con")):
            _triplet_grads(out, f"user_{suffix}", f"item_{suffix}", batch, slice(None),
                           dU[:, half], dI[:, half], dJ[:, half])
    return out


# --- discrepancy -------------------------------------------------------------

def pairwise_distances(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    sq = np.einsum("ij,ij->i", X, X)
    d2 = X @ X.T
    d2 *= -2.0
    d2 += sq[:, None]
    d2 += sq[None, :]
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2, out=d2)


def double_center(a) -> np.ndarray:
    """Subtract row and column means, add back the grand mean (a is symmetric)."""
    m = a.mean(axis=1)
    out = a - m[:, None]
    out -= m[None, :]
    out += m.mean()
    return out


def _distance_grad(X, a, own, other, h, c_own, c_other, work) -> np.ndarray:
    """Gradient w.r.t. X of sum_ij G_ij a_ij with G = c_other * other - c_own * own + h_i + h_j.

    ``a`` must have a non-zero diagonal (the self terms are dropped anyway);
    ``work`` is an n x n scratch buffer that gets overwritten.
    """
    W = np.multiply(own, -c_own / c_other, out=work)
    W += other
    W += h[:, None]
    W += h[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        W /= a
    np.fill_diagonal(W, 0.0)
    rows = W.sum(axis=1)
    if not np.isfinite(rows).all():
        # coincident rows: the pair has zero difference, so it contributes nothing
        W[a == 0] = 0.0
        rows = W.sum(axis=1)
    grad = rows[:, None] * X
    grad -= W @ X
    grad *= 2.0 * c_other
    return grad


def dcor(X, Y, with_grad: bool = False):
    """Biased (V-statistic) distance correlation of paired rows of X and Y.

    Defined as 0 when either distance variance vanishes; the gradient is
    then reported as zero. The centred matrices are never formed: every
    moment is expanded into raw distance sums plus row means.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n = len(X)
    if n < 2:
        raise ValueError("distance correlation needs at least 2 rows")
    if len(Y) != n:
        raise ValueError("X and Y must have the same number of rows")
    a, b = pairwise_distances(X), pairwise_distances(Y)
    ra, rb = a.mean(axis=1), b.mean(axis=1)
    ga, gb = ra.mean(), rb.mean()
    n2 = float(n * n)
    # <A, B> / n^2 = <a, b> / n^2 - 2 <ra, rb> / n + ga gb for double-centred A, B
    vxy = np.vdot(a, b) / n2 - 2.0 * np.dot(ra, rb) / n + ga * gb
    vx = np.vdot(a, a) / n2 - 2.0 * np.dot(ra, ra) / n + ga * ga
    vy = np.vdot(b, b) / n2 - 2.0 * np.dot(rb, rb) / n + gb * gb
    if vx <= 0 or vy <= 0:
        return (0.0, np.zeros_like(X), np.zeros_like(Y)) if with_grad else 0.0
    root = np.sqrt(vx * vy)
    r = max(vxy / root, 0.0)
    value = float(np.sqrt(r))
    if not with_grad:
        return value
    if value == 0.0:
        return value, np.zeros_like(X), np.zeros_like(Y)
    scale = 1.0 / (2.0 * value * n2)
    # dR/da = B / (n2 root) - R A / (n2 vx); expand A and B back into a, b
    # and row terms so the gradient needs one scratch matrix
    cb, ca = scale / root, scale * r / vx
    hx = (ca * (ra - 0.5 * ga) - cb * (rb - 0.5 * gb)) / cb
    cb2, ca2 = scale / root, scale * r / vy
    hy = (ca2 * (rb - 0.5 * gb) - cb2 * (ra - 0.5 * ga)) / cb2
    np.fill_diagonal(a, 1.0)
    np.fill_diagonal(b, 1.0)
    work = np.empty_like(a)
    gX = _distance_grad(X, a, a, b, hx, ca, cb, work)
    gY = _distance_grad(Y, b, b, a, hy, ca2, cb2, work)
    return value, gX, gY


def discrepancy(kind, int_rows, con_rows, row_cap: float | None = None):
    """Discrepancy penalty (lower = more separated) and gradients.

    l1inv / l2inv: negated mean row distance, optionally with each row's
    distance capped at ``row_cap``. dcor: distance correlation.
    Returns (value, grad_int, grad_con).
    """
    kind = Discrepancy(kind)
    X = np.asarray(int_rows, dtype=np.float64)
    Y = np.asarray(con_rows, dtype=np.float64)
    if kind is Discrepancy.DCOR:
        return dcor(X, Y, with_grad=True)
    n = len(X)
    if n == 0:
        return 0.0, np.zeros_like(X), np.zeros_like(Y)
    diff = X - Y
    if kind is Discrepancy.L1INV:
        dist = np.abs(diff).sum(axis=1)
        g = np.sign(diff)
    else:
        dist = np.sqrt((diff * diff).sum(axis=1))
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(dist[:, None] > 0, diff / dist[:, None], 0.0)
    if row_cap is not None:
        capped = dist > row_cap
        dist = np.minimum(dist, row_cap)
        g[capped] = 0.0
    value = -float(dist.sum()) / n
    gX = -g / n
    return value, gX, -gX


def loss_discrepancy(batch: Triplets, emb, kind, row_cap: float | None = None) -> BatchLoss:
    """Discrepancy over the distinct users plus the distinct items of the batch."""
    T = emb.tables
    out = BatchLoss(0.0)
    users = np.unique(batch.user)
    items = np.unique(np.concatenate([batch.pos, batch.neg]))
    for entity, rows in (("user", users), ("item", items)):
        if Discrepancy(kind) is Discrepancy.DCOR and len(rows) < 2:
            continue
        v, gi, gc = discrepancy(kind, T[f"{entity}_int"][rows], T[f"{entity}_con"][rows], row_cap)
        out.value += v
        out.add_grad(f"{entity}_int", rows, gi)
        out.add_grad(f"{entity}_con", rows, gc)
    return out


@dataclass
class LossWeights:
    alpha: float = 0.1
    beta: float = 0.01
    discrepancy: Discrepancy = Discrepancy.DCOR
    conformity_task: bool = True
    interest_task: bool = True
    literal_o2: bool = False
    row_cap: float | None = None

    def __post_init__(self):
        self.discrepancy = Discrepancy(self.discrepancy)
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")


def total_loss(batch: Triplets, emb, alpha: float = 0.1, beta: float = 0.01,
               kind=Discrepancy.DCOR, weights: LossWeights | None = None) -> BatchLoss:
    """click + alpha * (interest + conformity) + beta * discrepancy.

    ``weights`` (if given) supplies the ablation switches; its alpha/beta/kind
    are overridden by the explicit arguments.
    """
    w = weights or LossWeights()
    out = BatchLoss(0.0)
    click = loss_click(batch, emb)
    out.add(click)
    comps = {"click": click.value, "interest": 0.0, "conformity": 0.0, "discrepancy": 0.0}
    if alpha > 0:
        if w.interest_task:
            li = loss_interest(batch, emb)
            out.add(li, alpha)
            comps["interest"] = li.value
        if w.conformity_task:
            lc = loss_conformity(batch, emb, literal_o2=w.literal_o2)
            out.add(lc, alpha)
            comps["conformity"] = lc.value
    if beta > 0:
        ld = loss_discrepancy(batch, emb, kind, w.row_cap)
        out.add(ld, beta)
        comps["discrepancy"] = ld.value
    out.components = comps
    return out
