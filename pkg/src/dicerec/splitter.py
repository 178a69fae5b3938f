"""Intervened (non-IID) train/validation/test construction.

Records are drawn into an intervened pool with probability proportional to
the inverse popularity of their item, capped. The pool is then shuffled and
divided into intervened-train, validation and test; whatever was not drawn is
the normal training data.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import InteractionTable, interaction_entropy

PARTITIONS = ("train_normal", "train_intervened", "validation", "test")


class SplitConfigError(ValueError):
    pass


@dataclass
class SplitConfig:
    intervened_fraction: float = 0.4
    probability_cap: float = 0.9
    # shares of ALL records for (train_intervened, validation, test)
    intervened_allocation: tuple = (0.1, 0.1, 0.2)
    seed: int = 0

    def validate(self) -> None:
        if not 0 < self.probability_cap <= 1:
            raise SplitConfigError(f"probability_cap must be in (0, 1], got {self.probability_cap}")
        if not 0 <= self.intervened_fraction <= 1:
            raise SplitConfigError(f"intervened_fraction must be in [0, 1], got {self.intervened_fraction}")
        alloc = tuple(float(a) for a in self.intervened_allocation)
        if len(alloc) != 3 or min(alloc) < 0:
            raise SplitConfigError(f"intervened_allocation must be three non-negative shares, got {alloc}")
        if abs(sum(alloc) - self.intervened_fraction) > 1e-9:
            raise SplitConfigError(
                f"allocation {alloc} sums to {sum(alloc):.6g}, expected intervened_fraction "
                f"{self.intervened_fraction}")
        if self.intervened_fraction > self.probability_cap:
            raise SplitConfigError(
                f"intervened_fraction {self.intervened_fraction} unattainable with cap {self.probability_cap}")


def inverse_popularity_probabilities(record_popularity, fraction: float, cap: float = 0.9,
                                     tol: float = 1e-12) -> np.ndarray:
    """``min(cap, c / p)`` per record, with ``c`` bisected so the probabilities sum to ``fraction * n``."""
    p = np.asarray(record_popularity, dtype=np.float64)
    n = len(p)
    if n == 0 or fraction == 0:
        return np.zeros(n)
    if p.min() < 1:
        raise SplitConfigError("every record's item needs popularity >= 1")
    if fraction > cap:
        raise SplitConfigError(f"intervened fraction {fraction} unattainable with cap {cap}")
    target = fraction * n
    lo, hi = 0.0, cap * p.max()
    # sum at hi is cap * n >= target
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.minimum(cap, mid / p).sum() < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return np.minimum(cap, hi / p)


def compute_record_probabilities(table: InteractionTable, cfg: SplitConfig) -> np.ndarray:
    """Per-record probability of entering the intervened pool, inverse to item popularity."""
    cfg.validate()
    return inverse_popularity_probabilities(table.popularity[table.items], cfg.intervened_fraction,
                                            cfg.probability_cap)


@dataclass
class SplitBundle:
    n_users: int
    n_items: int
    partitions: dict  # name -> (users, items) int arrays
    seed: int = 0
    config: dict = field(default_factory=dict)

    def records(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return self.partitions[name]

    def size(self, name: str) -> int:
        return len(self.partitions[name][0])

    def popularity(self, name: str) -> np.ndarray:
        return np.bincount(self.partitions[name][1], minlength=self.n_items).astype(np.int64)

    def train_popularity(self) -> np.ndarray:
        return self.popularity("train_normal") + self.popularity("train_intervened")

    def entropy_report(self) -> dict:
        out = {}
        for name in PARTITIONS:
            pop = self.popularity(name)
            out[name] = interaction_entropy(pop) if pop.sum() > 0 else None
        return out

    def cold_start_report(self) -> dict:
        """Counts of users/items that have evaluation records but no training records."""
        tu = np.concatenate([self.partitions["train_normal"][0], self.partitions["train_intervened"][0]])
        ti = self.train_popularity() > 0
        seen_u = np.zeros(self.n_users, bool)
        seen_u[tu] = True
        out = {}
        for name in ("validation", "test"):
            u, i = self.partitions[name]
            out[name] = {
                "cold_users": int(np.unique(u[~seen_u[u]]).size),
                "cold_items": int(np.unique(i[~ti[i]]).size),
                "cold_item_records": int((~ti[i]).sum()),
            }
        return out

    def summary(self) -> dict:
        return {
            "n_users": self.n_users,
            "n_items": self.n_items,
            "seed": self.seed,
            "config": self.config,
            "counts": {name: self.size(name) for name in PARTITIONS},
            "entropy": self.entropy_report(),
            "cold_start": self.cold_start_report(),
        }


def draw_split(table: InteractionTable, cfg: SplitConfig) -> SplitBundle:
    probs = compute_record_probabilities(table, cfg)
    rng = np.random.default_rng(cfg.seed)
    n = len(table)
    chosen = rng.random(n) < probs
    pool = np.flatnonzero(chosen)
    rng.shuffle(pool)
    rest = np.flatnonzero(~chosen)

    alloc = np.asarray(cfg.intervened_allocation, dtype=np.float64)
    total = alloc.sum()
    if total > 0:
        shares = alloc / total
        n_ti = int(np.floor(len(pool) * shares[0]))
        n_val = int(np.floor(len(pool) * shares[1]))
    else:
        n_ti = n_val = 0
    parts_idx = {
        "train_normal": rest,
        "train_intervened": pool[:n_ti],
        "validation": pool[n_ti:n_ti + n_val],
        "test": pool[n_ti + n_val:],
    }
    partitions = {name: (table.users[idx].copy(), table.items[idx].copy()) for name, idx in parts_idx.items()}
    cfg_dict = asdict(cfg)
    cfg_dict["intervened_allocation"] = list(cfg.intervened_allocation)
    return SplitBundle(table.n_users, table.n_items, partitions, cfg.seed, cfg_dict)


def training_pool(split: SplitBundle, intervened_share: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Normal training records plus (a prefix of) the intervened training records.

    ``intervened_share`` is a fraction of ALL records; None includes every
    intervened training record.
    """
    nu, ni = split.records("train_normal")
    iu, ii = intervened_records(split, intervened_share)
    return np.concatenate([nu, iu]), np.concatenate([ni, ii])


def intervened_records(split: SplitBundle, intervened_share: float | None = None):
    iu, ii = split.records("train_intervened")
    if intervened_share is not None:
        total = sum(split.size(p) for p in PARTITIONS)
        k = int(round(intervened_share * total))
        if k > len(iu):
            raise SplitConfigError(
                f"intervened share {intervened_share} needs {k} records, split has {len(iu)}")
        iu, ii = iu[:k], ii[:k]
    return iu, ii


# persistence: <dir>/<partition>.tsv (user<TAB>item dense indices) + manifest.json

def save_split(split: SplitBundle, directory) -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name in PARTITIONS:
        u, i = split.partitions[name]
        body = "".join(f"{a}\t{b}\n" for a, b in zip(u.tolist(), i.tolist())).encode()
        (directory / f"{name}.tsv").write_bytes(body)
        digests[name] = hashlib.sha256(body).hexdigest()
    manifest = split.summary()
    manifest["files"] = {name: f"{name}.tsv" for name in PARTITIONS}
    manifest["sha256"] = digests
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_split(directory) -> SplitBundle:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    partitions = {}
    for name in PARTITIONS:
        raw = (directory / manifest["files"][name]).read_text()
        arr = np.array(raw.split(), dtype=np.int64).reshape(-1, 2) if raw.strip() else np.zeros((0, 2), np.int64)
        partitions[name] = (arr[:, 0].copy(), arr[:, 1].copy())
    return SplitBundle(manifest["n_users"], manifest["n_items"], partitions,
                       manifest.get("seed", 0), manifest.get("config", {}))
