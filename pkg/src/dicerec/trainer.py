"""Multi-task curriculum training with sparse Adam."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from .evaluator import evaluate
from .losses import BatchLoss, Discrepancy, LossWeights, total_loss
from .model import init_embeddings
from .sampler import PopularityIndex, SamplerConfig, SeenItems, Strategy, generate_epoch_triplets
from .splitter import SplitBundle, training_pool

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, snapshot=None, history=None):
        super().__init__(msg)
        self.snapshot = snapshot
        self.history = history or []


@dataclass
class TrainConfig:
    d: int = 64
    alpha: float = 0.1
    beta: float = 0.01
    decay: float = 0.9
    m_up: float | None = None
    m_down: float | None = None
    negatives_per_positive: int = 4
    learning_rate: float = 0.001
    batch_size: int = 1024
    epochs: int = 100
    patience: int = 10
    seed: int = 0
    discrepancy: str = "dcor"
    curriculum: bool = True
    strategy: str = "pnsm"
    weight_decay: float = 0.0
    conformity_task: bool = True
    literal_o2: bool = False
    row_cap: float | None = None
    intervened_share: float | None = None   # fraction of all records; None = whole partition
    val_k: int = 20

    def __post_init__(self):
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        Discrepancy(self.discrepancy)
        Strategy(self.strategy)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    """Adam moments shaped like the parameter tables; updated row-sparsely."""

    m: dict
    v: dict
    step: dict = field(default_factory=dict)  # per table; a table's clock only ticks when it is touched
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, tables: dict, **kw) -> "AdamState":
        return cls({k: np.zeros_like(t) for k, t in tables.items()},
                   {k: np.zeros_like(t) for k, t in tables.items()}, **kw)


def adam_step(tables: dict, state: AdamState, grads: dict, lr: float, weight_decay: float = 0.0) -> None:
    """Bias-corrected Adam applied in place to the touched rows only."""
    for name, (rows, g) in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for table {name!r}")
    b1, b2 = state.beta1, state.beta2
    for name, (rows, g) in grads.items():
        if len(rows) == 0:
            continue
        t = state.step[name] = state.step.get(name, 0) + 1
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        P = tables[name]
        if weight_decay:
            g = g + weight_decay * P[rows]
        m = state.m[name]
        v = state.v[name]
        m[rows] = b1 * m[rows] + (1.0 - b1) * g
        v[rows] = b2 * v[rows] + (1.0 - b2) * (g * g)
        P[rows] -= lr * (m[rows] / c1) / (np.sqrt(v[rows] / c2) + state.eps)


def curriculum_update(epoch: int, cfg: TrainConfig, m_up0: float, m_down0: float) -> tuple[float, float, float]:
    """(alpha, m_up, m_down) for an epoch: geometric decay when curriculum is on."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if not cfg.curriculum:
        return cfg.alpha, m_up0, m_down0
    f = cfg.decay ** epoch
    return cfg.alpha * f, max(0.0, m_up0 * f), max(0.0, m_down0 * f)


def run_epochs(params, epochs: int, patience: int, lr: float, weight_decay: float,
               epoch_batches: Callable[[int], tuple[Iterable, dict]],
               batch_loss: Callable[[object, dict], BatchLoss],
               validate: Callable[[object], float] | None,
               snapshot: Callable[[object], object],
               on_epoch: Callable[[dict], None] | None = None):
    """Shared epoch loop: batches -> loss -> Adam, validation-based model selection.

    ``epoch_batches(epoch)`` returns (batches, epoch_info) where epoch_info is
    merged into the log record and passed to ``batch_loss``.
    Returns (best_params, history).
    """
    state = AdamState.zeros_like(params.tables)
    history = []
    best, best_score, since_best = snapshot(params), -math.inf, 0
    for epoch in range(epochs):
        batches, info = epoch_batches(epoch)
        sums: dict = {}
        n_trip = 0
        for batch in batches:
            loss = batch_loss(batch, info)
            if not math.isfinite(loss.value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", best, history)
            try:
                adam_step(params.tables, state, loss.grads, lr, weight_decay)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", best, history) from exc
            sums["total"] = sums.get("total", 0.0) + loss.value
            for k, v in loss.components.items():
                sums[k] = sums.get(k, 0.0) + v
            n_trip += len(batch)
        rec = {"epoch": epoch, **info, "loss": sums, "n_triplets": n_trip}
        if validate is not None:
            score = validate(params)
            rec["val_recall"] = score
            if score > best_score:
                best, best_score, since_best = snapshot(params), score, 0
                rec["best"] = True
            else:
                since_best += 1
                rec["best"] = False
        else:
            best = snapshot(params)
        history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        log.info("epoch %d %s", epoch, json.dumps(rec, sort_keys=True))
        if validate is not None and since_best >= patience:
            break
    return best, history


def validation_recall(model, split: SplitBundle, k: int = 20) -> float:
    if split.size("validation") == 0:
        return 0.0
    try:
        rep = evaluate(model, split, ks=(k,), partition="validation")
    except ValueError:
        return 0.0
    return rep.metrics[str(k)]["recall"]


@dataclass
class FitResult:
    model: object
    history: list = field(default_factory=list)
    margins0: tuple = (0.0, 0.0)


def fit(split: SplitBundle, cfg: TrainConfig, on_epoch=None) -> FitResult:
    """Train DICE embeddings on normal + intervened training records."""
    users, items = training_pool(split, cfg.intervened_share)
    if len(users) == 0 and cfg.epochs > 0:
        raise ValueError("training partitions are empty")
    emb = init_embeddings(split.n_users, split.n_items, cfg.d, cfg.seed)
    pop = np.bincount(items, minlength=split.n_items)
    index = PopularityIndex.build(pop)
    seen = SeenItems(users, items, split.n_users, split.n_items)
    scfg = SamplerConfig(cfg.strategy, cfg.m_up, cfg.m_down, cfg.negatives_per_positive, cfg.seed)
    m_up0, m_down0 = scfg.resolved_margins(pop)
    weights = LossWeights(cfg.alpha, cfg.beta, cfg.discrepancy, cfg.conformity_task, True,
                          cfg.literal_o2, cfg.row_cap)

    def epoch_batches(epoch):
        alpha, m_up, m_down = curriculum_update(epoch, cfg, m_up0, m_down0)
        rng = np.random.default_rng([cfg.seed, epoch])
        trip = generate_epoch_triplets(users, items, index, seen, scfg, rng, (m_up, m_down))
        info = {"alpha": alpha, "beta": cfg.beta, "m_up": m_up, "m_down": m_down,
                "o2_fraction": float(trip.is_o2.mean()) if len(trip) else 0.0}
        return trip.batches(cfg.batch_size), info

    def batch_loss(batch, info):
        return total_loss(batch, emb, info["alpha"], cfg.beta, cfg.discrepancy, weights)

    validate = (lambda m: validation_recall(m, split, cfg.val_k)) if split.size("validation") else None
    best, history = run_epochs(emb, cfg.epochs, cfg.patience, cfg.learning_rate, cfg.weight_decay,
                               epoch_batches, batch_loss, validate, lambda m: m.copy(), on_epoch)
    return FitResult(best, history, (m_up0, m_down0))
