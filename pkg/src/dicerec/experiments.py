"""Desk-scale presets shared by the acceptance tests and ``scripts/``.

The planted-factor generator stands in for the large public datasets: its
clicks mix a low-rank interest term with a per-user conformity strength
times item log-popularity, so there is a known ground truth for what the
interest and conformity embeddings should pick up.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from .baselines import BaselineConfig
from .splitter import SplitBundle, SplitConfig, draw_split
from .synthetic import PlantedFactors, planted_factor_table
from .trainer import TrainConfig


@dataclass(frozen=True)
class PlantedData:
    n_users: int = 1000
    n_items: int = 1000
    dim: int = 8
    interest_scale: float = 2.0
    conformity_mean: float = 1.0
    conformity_spread: float = 1.0
    popularity_exponent: float = 1.0
    offset: float = -6.0

    def factors(self, seed: int) -> PlantedFactors:
        return planted_factor_table(seed=seed, **asdict(self))

    def split(self, seed: int, **split_overrides) -> SplitBundle:
        return draw_split(self.factors(seed).table, SplitConfig(seed=seed, **split_overrides))


@dataclass(frozen=True)
class DeskTraining:
    """Optimiser budget used for every model in a comparison."""
    d: int = 16
    epochs: int = 40
    learning_rate: float = 0.01
    batch_size: int = 1024
    patience: int = 10
    alpha: float = 1.0
    decay: float = 0.9

    def _common(self, seed):
        return dict(d=self.d, epochs=self.epochs, learning_rate=self.learning_rate,
                    batch_size=self.batch_size, patience=self.patience, seed=seed)

    def dice(self, seed: int = 0, **overrides) -> TrainConfig:
        cfg = TrainConfig(**self._common(seed), alpha=self.alpha, decay=self.decay)
        return replace(cfg, **overrides) if overrides else cfg

    def baseline(self, seed: int = 0, **overrides) -> BaselineConfig:
        cfg = BaselineConfig(**self._common(seed))
        return replace(cfg, **overrides) if overrides else cfg


PLANTED = PlantedData()
BUDGET = DeskTraining()
