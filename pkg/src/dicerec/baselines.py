"""Comparison methods: ItemPop, MF-BPR, the IPS family, scalar biases and CausE.

All of them train through ``trainer.run_epochs`` and are scored by the same
evaluator, so comparisons share one protocol.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .evaluator import PopularityScorer, itempop_rank
from .losses import BatchLoss, pairwise_loss
from .model import Variant
from .sampler import PopularityIndex, SamplerConfig, SeenItems, Strategy, generate_epoch_triplets
from .splitter import SplitBundle, intervened_records, training_pool
from .trainer import FitResult, TrainConfig, run_epochs, validation_recall

__all__ = [
    "IpsVariant", "BiasVariant", "BaselineConfig", "FactorModel", "CausEModel",
    "itempop_rank", "ips_weight", "ips_cap", "train_baseline", "MODEL_NAMES",
]


class IpsVariant(str, enum.Enum):
    PLAIN = "ips"
    CAPPED = "ips-c"
    CAPPED_NORMALIZED = "ips-cn"
    CNSR = "ips-cnsr"


class BiasVariant(str, enum.Enum):
    USER = "bias-u"
    ITEM = "bias-i"
    USER_ITEM = "bias-ui"


MODEL_NAMES = ("dice", "mf", "ips", "ips-c", "ips-cn", "ips-cnsr", "bias-u", "bias-i", "bias-ui", "cause",
               "itempop")


@dataclass
class BaselineConfig(TrainConfig):
    ips_cap_quantile: float = 0.95
    ips_lambda: float = 0.5
    cause_gamma: float = 0.01
    cause_penalty: str = "l2"
    freeze_embeddings: bool = False

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.ips_lambda <= 1:
            raise ValueError("ips_lambda must be in (0, 1]")
        if not 0 < self.ips_cap_quantile <= 1:
            raise ValueError("ips_cap_quantile must be in (0, 1]")
        if self.cause_penalty not in ("l1", "l2"):
            raise ValueError("cause_penalty must be 'l1' or 'l2'")


# --- IPS weights -------------------------------------------------------------

def _raw_weight(variant: IpsVariant, popularity, lam: float) -> np.ndarray:
    p = np.asarray(popularity, dtype=np.float64)
    if np.any(p < 1):
        raise ValueError("IPS weights need popularity >= 1")
    w = 1.0 / p
    return w ** lam if variant is IpsVariant.CNSR else w


def ips_cap(variant, record_popularity, quantile: float = 0.95, lam: float = 0.5) -> float | None:
    """Cap value: the ``quantile`` of the (smoothed, for CNSR) raw weights over training records."""
    variant = IpsVariant(variant)
    if variant is IpsVariant.PLAIN:
        return None
    return float(np.quantile(_raw_weight(variant, record_popularity, lam), quantile))


def ips_weight(variant, popularity, cap: float | None = None, lam: float = 0.5) -> np.ndarray:
    """Per-instance weights for a batch given each instance's positive-item popularity."""
    variant = IpsVariant(variant)
    w = _raw_weight(variant, popularity, lam)
    if variant is IpsVariant.PLAIN:
        return w
    if cap is not None:
        w = np.minimum(w, cap)
    if variant in (IpsVariant.CAPPED_NORMALIZED, IpsVariant.CNSR) and len(w):
        w = w / w.mean()
    return w


# --- models ------------------------------------------------------------------

class FactorModel:
    """Single-table MF with optional scalar user/item biases."""

    def __init__(self, user, item, user_bias=None, item_bias=None, kind="mf"):
        self.kind = kind
        self.tables = {"user": np.asarray(user, float), "item": np.asarray(item, float)}
        if user_bias is not None:
            self.tables["user_bias"] = np.asarray(user_bias, float).reshape(-1, 1)
        if item_bias is not None:
            self.tables["item_bias"] = np.asarray(item_bias, float).reshape(-1, 1)

    @classmethod
    def init(cls, n_users, n_items, dim, seed, user_bias=False, item_bias=False, kind="mf"):
        rng = np.random.default_rng(seed)
        std = 0.1 / np.sqrt(dim)
        U = rng.normal(0.0, std, (n_users, dim))
        I = rng.normal(0.0, std, (n_items, dim))
        return cls(U, I, np.zeros(n_users) if user_bias else None,
                   np.zeros(n_items) if item_bias else None, kind)

    @property
    def n_users(self):
        return self.tables["user"].shape[0]

    @property
    def n_items(self):
        return self.tables["item"].shape[0]

    @property
    def dim(self):
        return self.tables["user"].shape[1]

    def copy(self):
        t = self.tables
        return FactorModel(t["user"].copy(), t["item"].copy(),
                           t["user_bias"].copy() if "user_bias" in t else None,
                           t["item_bias"].copy() if "item_bias" in t else None, self.kind)

    def score_matrix(self, users, variant=Variant.FULL):
        t = self.tables
        s = t["user"][users] @ t["item"].T
        if "item_bias" in t:
            s = s + t["item_bias"][:, 0][None, :]
        if "user_bias" in t:
            s = s + t["user_bias"][users]
        return s

    def batch_loss(self, batch, weights=None, freeze_embeddings=False) -> BatchLoss:
        """Weighted BPR; biases ride along as extra embedding coordinates."""
        t = self.tables
        u, i, j = batch.user, batch.pos, batch.neg
        cols_u, cols_i, cols_j = [t["user"][u]], [t["item"][i]], [t["item"][j]]
        n = len(batch)
        if "item_bias" in t:
            cols_u.append(np.ones((n, 1)))
            cols_i.append(t["item_bias"][i])
            cols_j.append(t["item_bias"][j])
        if "user_bias" in t:
            # cancels in a pairwise difference: gradient is identically zero
            cols_u.append(t["user_bias"][u])
            cols_i.append(np.ones((n, 1)))
            cols_j.append(np.ones((n, 1)))
        v, dU, dI, dJ = pairwise_loss(np.hstack(cols_u), np.hstack(cols_i), np.hstack(cols_j), coef=weights)
        out = BatchLoss(v, components={"click": v})
        if n == 0:
            return out
        d = self.dim
        items = np.concatenate([i, j])
        if not freeze_embeddings:
            out.add_grad("user", u, dU[:, :d])
            out.add_grad("item", items, np.vstack([dI[:, :d], dJ[:, :d]]))
        col = d
        if "item_bias" in t:
            out.add_grad("item_bias", items, np.vstack([dI[:, col:col + 1], dJ[:, col:col + 1]]))
            col += 1
        if "user_bias" in t:
            out.add_grad("user_bias", u, dU[:, col:col + 1])
        return out


class CausEModel:
    """Two factorizations: one on normal, one on intervened training data; serves the normal set."""

    kind = "cause"

    def __init__(self, tables: dict):
        self.tables = {k: np.asarray(v, float) for k, v in tables.items()}

    @classmethod
    def init(cls, n_users, n_items, dim, seed):
        normal = FactorModel.init(n_users, n_items, dim, seed)
        inter = FactorModel.init(n_users, n_items, dim, [seed, 1])
        return cls({"user": normal.tables["user"], "item": normal.tables["item"],
                    "user_iv": inter.tables["user"], "item_iv": inter.tables["item"]})

    @property
    def n_users(self):
        return self.tables["user"].shape[0]

    @property
    def n_items(self):
        return self.tables["item"].shape[0]

    def copy(self):
        return CausEModel({k: v.copy() for k, v in self.tables.items()})

    def factor(self, which: str) -> FactorModel:
        sfx = "" if which == "normal" else "_iv"
        return FactorModel(self.tables["user" + sfx], self.tables["item" + sfx])

    def score_matrix(self, users, variant=Variant.FULL):
        return self.tables["user"][users] @ self.tables["item"].T


def _penalty(model: CausEModel, users, items, gamma: float, kind: str) -> BatchLoss:
    """gamma * ||theta_normal - theta_intervened|| over the rows a batch touches."""
    out = BatchLoss(0.0)
    for ent, rows in (("user", np.unique(users)), ("item", np.unique(items))):
        diff = model.tables[ent][rows] - model.tables[ent + "_iv"][rows]
        if kind == "l2":
            out.value += gamma * float((diff * diff).sum())
            g = 2.0 * gamma * diff
        else:
            out.value += gamma * float(np.abs(diff).sum())
            g = gamma * np.sign(diff)
        out.add_grad(ent, rows, g)
        out.add_grad(ent + "_iv", rows, -g)
    return out


# --- training ----------------------------------------------------------------

def _sampler_stream(users, items, n_users, n_items, cfg: TrainConfig, seed):
    pop = np.bincount(items, minlength=n_items)
    index = PopularityIndex.build(pop)
    seen = SeenItems(users, items, n_users, n_items)
    scfg = SamplerConfig(Strategy.RANDOM, 0.0, 0.0, cfg.negatives_per_positive, cfg.seed)

    def draw(epoch):
        rng = np.random.default_rng([seed, epoch] if not isinstance(seed, list) else seed + [epoch])
        return generate_epoch_triplets(users, items, index, seen, scfg, rng, (0.0, 0.0))
    return draw, pop


def train_baseline(kind: str, split: SplitBundle, cfg: BaselineConfig, on_epoch=None) -> FitResult:
    """Train a baseline by name (see MODEL_NAMES; "dice" lives in trainer.fit)."""
    kind = kind.lower()
    if kind == "itempop":
        users, items = training_pool(split, cfg.intervened_share)
        return FitResult(PopularityScorer(np.bincount(items, minlength=split.n_items)), [])
    if kind == "cause":
        return _train_cause(split, cfg, on_epoch)
    if kind not in MODEL_NAMES or kind == "dice":
        raise ValueError(f"unknown baseline {kind!r}")

    users, items = training_pool(split, cfg.intervened_share)
    if len(users) == 0 and cfg.epochs > 0:
        raise ValueError("training partitions are empty")
    dim = 2 * cfg.d
    ub = kind in (BiasVariant.USER.value, BiasVariant.USER_ITEM.value)
    ib = kind in (BiasVariant.ITEM.value, BiasVariant.USER_ITEM.value)
    model = FactorModel.init(split.n_users, split.n_items, dim, cfg.seed, ub, ib, kind)
    draw, pop = _sampler_stream(users, items, split.n_users, split.n_items, cfg, cfg.seed)

    ips = IpsVariant(kind) if kind.startswith("ips") else None
    cap = ips_cap(ips, pop[items], cfg.ips_cap_quantile, cfg.ips_lambda) if ips else None

    def epoch_batches(epoch):
        return draw(epoch).batches(cfg.batch_size), {"ips_cap": cap} if ips else {}

    def batch_loss(batch, info):
        w = ips_weight(ips, pop[batch.pos], cap, cfg.ips_lambda) if ips else None
        return model.batch_loss(batch, w, cfg.freeze_embeddings)

    validate = (lambda m: validation_recall(m, split, cfg.val_k)) if split.size("validation") else None
    best, history = run_epochs(model, cfg.epochs, cfg.patience, cfg.learning_rate, cfg.weight_decay,
                               epoch_batches, batch_loss, validate, lambda m: m.copy(), on_epoch)
    return FitResult(best, history)


@dataclass
class _Tagged:
    which: str
    batch: object

    def __len__(self):
        return len(self.batch)


def _interleave(a, b):
    a, b = list(a), list(b)
    out = []
    for k in range(max(len(a), len(b))):
        if k < len(a):
            out.append(a[k])
        if k < len(b):
            out.append(b[k])
    return out


def _train_cause(split: SplitBundle, cfg: BaselineConfig, on_epoch=None) -> FitResult:
    nu, ni = split.records("train_normal")
    iu, ii = intervened_records(split, cfg.intervened_share)
    if len(iu) == 0:
        raise ValueError("CausE needs a nonempty intervened training partition")
    model = CausEModel.init(split.n_users, split.n_items, cfg.d, cfg.seed)
    draw_n, _ = _sampler_stream(nu, ni, split.n_users, split.n_items, cfg, cfg.seed)
    draw_i, _ = _sampler_stream(iu, ii, split.n_users, split.n_items, cfg, [cfg.seed, 1])

    def epoch_batches(epoch):
        tn = [_Tagged("normal", b) for b in draw_n(epoch).batches(cfg.batch_size)]
        ti = [_Tagged("intervened", b) for b in draw_i(epoch).batches(cfg.batch_size)]
        return _interleave(tn, ti), {"gamma": cfg.cause_gamma}

    def batch_loss(tagged, info):
        which, batch = tagged.which, tagged.batch
        sub = model.factor(which)
        loss = sub.batch_loss(batch)
        if which == "intervened":
            loss.grads = {k + "_iv": v for k, v in loss.grads.items()}
        if cfg.cause_gamma > 0:
            pen = _penalty(model, batch.user, np.concatenate([batch.pos, batch.neg]),
                           cfg.cause_gamma, cfg.cause_penalty)
            loss.add(pen)
            loss.components["penalty"] = pen.value
        return loss

    validate = (lambda m: validation_recall(m, split, cfg.val_k)) if split.size("validation") else None
    best, history = run_epochs(model, cfg.epochs, cfg.patience, cfg.learning_rate, cfg.weight_decay,
                               epoch_batches, batch_loss, validate, lambda m: m.copy(), on_epoch)
    return FitResult(best, history)
