"""Synthetic interaction generators for tests and desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import InteractionTable


def _solve_scale(weights, target, cap):
    lo, hi = 0.0, target / weights.min() + cap
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.minimum(cap, mid * weights).sum() < target:
            lo = mid
        else:
            hi = mid
    return hi


def zipf_table(n_users: int = 2000, n_items: int = 500, n_interactions: int = 100_000,
               exponent: float = 1.0, seed: int = 0, max_user_share: float = 0.9) -> InteractionTable:
    """Item popularity ~ rank^-exponent, users drawn uniformly without repeats per item.

    Per-item counts are capped at ``max_user_share * n_users`` and the Zipf
    scale is solved so the total is ``n_interactions``.
    """
    rng = np.random.default_rng(seed)
    w = 1.0 / np.arange(1, n_items + 1) ** exponent
    cap = max(1.0, np.floor(max_user_share * n_users))
    if n_interactions > cap * n_items:
        raise ValueError("too many interactions for the catalogue size")
    scale = _solve_scale(w, n_interactions, cap)
    counts = np.maximum(1, np.round(np.minimum(cap, scale * w))).astype(np.int64)
    item_ids = rng.permutation(n_items)  # popularity rank is not tied to item index
    users, items = [], []
    for rank, c in enumerate(counts):
        users.append(rng.choice(n_users, size=int(c), replace=False))
        items.append(np.full(int(c), item_ids[rank]))
    u = np.concatenate(users)
    i = np.concatenate(items)
    order = rng.permutation(len(u))
    return InteractionTable.from_indices(u[order], i[order], n_users, n_items)


@dataclass
class PlantedFactors:
    table: InteractionTable
    user_interest: np.ndarray
    item_traits: np.ndarray
    user_conformity: np.ndarray
    item_log_popularity: np.ndarray


def planted_factor_table(n_users: int = 1000, n_items: int = 500, dim: int = 8, seed: int = 0,
                         interest_scale: float = 2.0, conformity_mean: float = 1.0,
                         conformity_spread: float = 0.5, popularity_exponent: float = 1.0,
                         offset: float = -6.0) -> PlantedFactors:
    """Clicks drawn as Bernoulli(logistic(interest + conformity * log-popularity + offset)).

    interest = interest_scale * <u, v>, with Gaussian factors scaled so the
    inner product has unit variance; conformity is a per-user non-negative
    strength; log-popularity is a Zipf log-rank profile centred to mean zero.
    """
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(n_users, dim)) * dim ** -0.25
    V = rng.normal(size=(n_items, dim)) * dim ** -0.25
    conf = np.maximum(0.0, rng.normal(conformity_mean, conformity_spread, n_users))
    logpop = -popularity_exponent * np.log(np.arange(1, n_items + 1))
    logpop = logpop - logpop.mean()
    logpop = logpop[rng.permutation(n_items)]
    logits = interest_scale * (U @ V.T) + conf[:, None] * logpop[None, :] + offset
    clicks = rng.random(logits.shape) < 1.0 / (1.0 + np.exp(-logits))
    u, i = np.nonzero(clicks)
    order = rng.permutation(len(u))
    table = InteractionTable.from_indices(u[order], i[order], n_users, n_items)
    return PlantedFactors(table, U, V, conf, logpop)
