"""Training triplet generation with popularity-margin negative sampling (PNSM)."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

MAX_REJECTIONS = 32


class Strategy(str, enum.Enum):
    PNSM = "pnsm"
    RANDOM = "random"


# case tags: O1 = negative less popular than positive, O2 = more popular
O1 = 0
O2 = 1


@dataclass
class SamplerConfig:
    strategy: Strategy = Strategy.PNSM
    m_up: float | None = None      # None -> default_margin(training popularity)
    m_down: float | None = None
    negatives_per_positive: int = 4
    seed: int = 0

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        for name in ("m_up", "m_down"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")

    def resolved_margins(self, popularity) -> tuple[float, float]:
        d = default_margin(popularity)
        return (d if self.m_up is None else float(self.m_up),
                d if self.m_down is None else float(self.m_down))


def default_margin(popularity) -> float:
    """10% of the span between the most and least popular item."""
    p = np.asarray(popularity)
    if p.size == 0:
        return 0.0
    return 0.1 * float(p.max() - p.min())


@dataclass(frozen=True)
class PopularityIndex:
    popularity: np.ndarray
    order: np.ndarray          # item ids sorted ascending by popularity (stable)
    sorted_pop: np.ndarray

    @classmethod
    def build(cls, popularity) -> "PopularityIndex":
        pop = np.asarray(popularity, dtype=np.float64)
        order = np.argsort(pop, kind="stable")
        return cls(pop, order, pop[order])

    @property
    def n_items(self) -> int:
        return len(self.order)

    def below(self, t) -> np.ndarray:
        """Items with popularity strictly below t."""
        return self.order[: np.searchsorted(self.sorted_pop, t, side="left")]

    def above(self, t) -> np.ndarray:
        """Items with popularity strictly above t."""
        return self.order[np.searchsorted(self.sorted_pop, t, side="right"):]


def build_popularity_index(popularity) -> PopularityIndex:
    return PopularityIndex.build(popularity)


class SeenItems:
    """Vectorized membership test for (user, item) training pairs."""

    def __init__(self, users, items, n_users: int, n_items: int):
        self.n_users = n_users
        self.n_items = n_items
        self.keys = np.unique(np.asarray(users, np.int64) * n_items + np.asarray(items, np.int64))
        self.counts = np.bincount(self.keys // max(n_items, 1), minlength=n_users)

    def contains(self, users, items) -> np.ndarray:
        q = np.asarray(users, np.int64) * self.n_items + np.asarray(items, np.int64)
        if len(self.keys) == 0:
            return np.zeros(q.shape, bool)
        pos = np.minimum(np.searchsorted(self.keys, q), len(self.keys) - 1)
        return self.keys[pos] == q

    def items_of(self, user: int) -> np.ndarray:
        lo = np.searchsorted(self.keys, user * self.n_items)
        hi = np.searchsorted(self.keys, (user + 1) * self.n_items)
        return self.keys[lo:hi] - user * self.n_items


@dataclass
class Triplets:
    user: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    case: np.ndarray  # int8, O1 or O2

    def __len__(self) -> int:
        return len(self.user)

    def __getitem__(self, sl) -> "Triplets":
        return Triplets(self.user[sl], self.pos[sl], self.neg[sl], self.case[sl])

    @property
    def is_o2(self) -> np.ndarray:
        return self.case == O2

    def batches(self, size: int):
        for start in range(0, len(self), size):
            yield self[start:start + size]


def _uniform_unseen(users, seen: SeenItems, rng) -> np.ndarray:
    out = np.full(len(users), -1, dtype=np.int64)
    todo = np.arange(len(users))
    for _ in range(MAX_REJECTIONS):
        if todo.size == 0:
            return out
        cand = rng.integers(0, seen.n_items, size=todo.size)
        ok = ~seen.contains(users[todo], cand)
        out[todo[ok]] = cand[ok]
        todo = todo[~ok]
    for t in todo:  # users who have seen nearly everything
        free = np.setdiff1d(np.arange(seen.n_items), seen.items_of(int(users[t])), assume_unique=True)
        if free.size == 0:
            raise ValueError(f"user {int(users[t])} has no unseen item to sample")
        out[t] = free[rng.integers(free.size)]
    return out


def sample_negatives(users, pos, index: PopularityIndex, seen: SeenItems, strategy: Strategy,
                     m_up: float, m_down: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw one negative per (user, pos) and its case tag.

    PNSM draws uniformly from the union of items with popularity above
    ``p_pos + m_up`` and below ``p_pos - m_down``, rejecting seen items up to
    MAX_REJECTIONS times before falling back to any unseen item.
    """
    users = np.asarray(users, np.int64)
    pos = np.asarray(pos, np.int64)
    n = len(users)
    neg = np.full(n, -1, dtype=np.int64)
    p = index.popularity[pos]
    if Strategy(strategy) is Strategy.PNSM and n:
        n_low = np.searchsorted(index.sorted_pop, p - m_down, side="left")
        hi_start = np.searchsorted(index.sorted_pop, p + m_up, side="right")
        n_eligible = n_low + (index.n_items - hi_start)
        todo = np.flatnonzero(n_eligible > 0)
        for _ in range(MAX_REJECTIONS):
            if todo.size == 0:
                break
            r = np.floor(rng.random(todo.size) * n_eligible[todo]).astype(np.int64)
            low = r < n_low[todo]
            slot = np.where(low, r, hi_start[todo] + r - n_low[todo])
            cand = index.order[slot]
            ok = ~seen.contains(users[todo], cand)
            neg[todo[ok]] = cand[ok]
            todo = todo[~ok]
    rest = np.flatnonzero(neg < 0)
    if rest.size:
        neg[rest] = _uniform_unseen(users[rest], seen, rng)
    case = np.where(index.popularity[neg] > p, O2, O1).astype(np.int8)
    return neg, case


def sample_negative_pnsm(user: int, pos: int, index: PopularityIndex, seen: SeenItems,
                         cfg: SamplerConfig, rng) -> tuple[int, int]:
    m_up, m_down = cfg.resolved_margins(index.popularity)
    neg, case = sample_negatives(np.array([user]), np.array([pos]), index, seen,
                                 Strategy.PNSM, m_up, m_down, rng)
    return int(neg[0]), int(case[0])


def generate_epoch_triplets(users, items, index: PopularityIndex, seen: SeenItems, cfg: SamplerConfig,
                            rng, margins: tuple[float, float] | None = None) -> Triplets:
    """``negatives_per_positive`` triplets per training record, in a seeded shuffled order."""
    if margins is None:
        margins = cfg.resolved_margins(index.popularity)
    k = cfg.negatives_per_positive
    u = np.repeat(np.asarray(users, np.int64), k)
    i = np.repeat(np.asarray(items, np.int64), k)
    neg, case = sample_negatives(u, i, index, seen, cfg.strategy, margins[0], margins[1], rng)
    perm = rng.permutation(len(u))
    return Triplets(u[perm], i[perm], neg[perm], case[perm])
