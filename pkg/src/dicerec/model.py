"""Interest/conformity embedding tables and scoring."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

TABLES = ("user_int", "user_con", "item_int", "item_con")


class Variant(str, enum.Enum):
    FULL = "full"
    INTEREST = "interest_only"
    CONFORMITY = "conformity_only"

    @classmethod
    def parse(cls, s) -> "Variant":
        aliases = {"int": cls.INTEREST, "interest": cls.INTEREST,
                   "con": cls.CONFORMITY, "conformity": cls.CONFORMITY}
        if isinstance(s, cls):
            return s
        return aliases.get(s) or cls(s)


@dataclass(frozen=True)
class ScoreTriple:
    s_int: float
    s_con: float
    s_click: float


class CausalEmbeddings:
    """Four embedding tables: user/item x interest/conformity.

    This is the matrix-factorization backbone: an entity's representation is
    its table row. Another backbone (e.g. graph propagation) would override
    ``user_repr``/``item_repr`` and route gradients back to its own
    parameters; losses only see the representation rows.
    """

    kind = "dice"

    def __init__(self, user_int, user_con, item_int, item_con):
        self.tables = {
            "user_int": np.asarray(user_int, dtype=np.float64),
            "user_con": np.asarray(user_con, dtype=np.float64),
            "item_int": np.asarray(item_int, dtype=np.float64),
            "item_con": np.asarray(item_con, dtype=np.float64),
        }
        d = {t.shape[1] for t in self.tables.values()}
        if len(d) != 1:
            raise ValueError(f"embedding tables disagree on dimension: {sorted(d)}")
        if self.tables["user_int"].shape != self.tables["user_con"].shape or \
                self.tables["item_int"].shape != self.tables["item_con"].shape:
            raise ValueError("interest and conformity tables must have matching shapes")

    user_int = property(lambda self: self.tables["user_int"])
    user_con = property(lambda self: self.tables["user_con"])
    item_int = property(lambda self: self.tables["item_int"])
    item_con = property(lambda self: self.tables["item_con"])

    @property
    def d(self) -> int:
        return self.tables["user_int"].shape[1]

    @property
    def n_users(self) -> int:
        return self.tables["user_int"].shape[0]

    @property
    def n_items(self) -> int:
        return self.tables["item_int"].shape[0]

    def copy(self) -> "CausalEmbeddings":
        return CausalEmbeddings(*(self.tables[k].copy() for k in TABLES))

    def user_repr(self, users):
        return self.tables["user_int"][users], self.tables["user_con"][users]

    def item_repr(self, items):
        return self.tables["item_int"][items], self.tables["item_con"][items]

    def concatenated(self, entity: str) -> np.ndarray:
        return np.hstack([self.tables[f"{entity}_int"], self.tables[f"{entity}_con"]])

    def score_matrix(self, users, variant: Variant = Variant.FULL) -> np.ndarray:
        variant = Variant.parse(variant)
        ui, uc = self.user_repr(users)
        if variant is Variant.INTEREST:
            return ui @ self.item_int.T
        if variant is Variant.CONFORMITY:
            return uc @ self.item_con.T
        return ui @ self.item_int.T + uc @ self.item_con.T


def init_embeddings(n_users: int, n_items: int, d: int = 64, seed: int = 0) -> CausalEmbeddings:
    if min(n_users, n_items, d) < 1:
        raise ValueError("n_users, n_items and d must be >= 1")
    rng = np.random.default_rng(seed)
    std = 0.1 / np.sqrt(d)
    return CausalEmbeddings(
        rng.normal(0.0, std, (n_users, d)),
        rng.normal(0.0, std, (n_users, d)),
        rng.normal(0.0, std, (n_items, d)),
        rng.normal(0.0, std, (n_items, d)),
    )


def _check_index(k: int, n: int, what: str) -> None:
    if not 0 <= k < n:
        raise IndexError(f"{what} index {k} out of range [0, {n})")


def score(emb: CausalEmbeddings, u: int, i: int) -> ScoreTriple:
    _check_index(u, emb.n_users, "user")
    _check_index(i, emb.n_items, "item")
    s_int = float(emb.user_int[u] @ emb.item_int[i])
    s_con = float(emb.user_con[u] @ emb.item_con[i])
    return ScoreTriple(s_int, s_con, s_int + s_con)


def score_variant(emb: CausalEmbeddings, u: int, i: int, variant: Variant = Variant.FULL) -> float:
    s = score(emb, u, i)
    variant = Variant.parse(variant)
    if variant is Variant.INTEREST:
        return s.s_int
    if variant is Variant.CONFORMITY:
        return s.s_con
    return s.s_click


def top_k(scores: np.ndarray, k: int, exclude=None) -> np.ndarray:
    """Indices of the k largest scores, descending, ties by ascending index.

    ``scores`` may be 1-D or a 2-D batch (one row per user). ``exclude`` is
    an item collection (1-D) or a boolean mask shaped like ``scores``.
    """
    s = np.array(scores, dtype=np.float64, copy=True)
    squeeze = s.ndim == 1
    s = np.atleast_2d(s)
    n = s.shape[1]
    if exclude is not None:
        mask = np.asarray(exclude)
        if mask.dtype == bool and mask.shape[-1] == n:
            s[np.broadcast_to(np.atleast_2d(mask), s.shape)] = -np.inf
            n_excl = int(np.atleast_2d(mask).sum(axis=1).max()) if mask.size else 0
        else:
            idx = np.unique(mask.astype(np.int64))
            s[:, idx] = -np.inf
            n_excl = idx.size
    else:
        n_excl = 0
    if k > n - n_excl:
        raise ValueError(f"K={k} exceeds the {n - n_excl} available candidates")
    order = np.argsort(-s, axis=1, kind="stable")[:, :k]
    return order[0] if squeeze else order


def rank_all_items(emb, u: int, exclude=(), variant: Variant = Variant.FULL, k: int = 20) -> list[int]:
    _check_index(u, emb.n_users, "user")
    s = emb.score_matrix(np.array([u]), variant)[0]
    excl = np.asarray(sorted(exclude), dtype=np.int64)
    return top_k(s, k, excl if excl.size else None).tolist()
