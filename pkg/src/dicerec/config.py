"""Run configuration: INI-style sections, one per module, plus dotted overrides.

Precedence is flags > file > defaults. Example file::

    [data]
    source = ratings
    ratings = ml-10m/ratings.dat
    threshold = 5.0

    [split]
    seed = 7

    [train]
    epochs = 50
    discrepancy = l2inv
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import BaselineConfig
from .splitter import SplitConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    source: str = "ratings"           # ratings | synthetic-zipf | synthetic-planted
    ratings: str = ""
    delimiter: str = ""               # empty: sniff "::" vs ","
    threshold: float = 5.0
    n_users: int = 1000
    n_items: int = 500
    n_interactions: int = 100_000     # synthetic-zipf only
    synthetic_seed: int = 0


@dataclass
class EvalConfig:
    ks: tuple = (20, 50)
    variants: tuple = ("full",)
    iou_ks: tuple = (10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
    iou_reference: str = "global"   # or "recommended": ItemPop's own top-K under the same exclusion
    exclude_validation: bool = False
    per_user: bool = False


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    train: BaselineConfig = field(default_factory=BaselineConfig)
    evaluate: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            d = dataclasses.asdict(getattr(self, f.name))
            out[f.name] = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        return out


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(raw: str, annotation: str, default):
    s = raw.strip()
    if s.lower() in ("none", "null", "") and ("None" in annotation or default is None):
        return None
    if "bool" in annotation or isinstance(default, bool):
        if s.lower() in _TRUE:
            return True
        if s.lower() in _FALSE:
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if "tuple" in annotation or isinstance(default, tuple):
        parts = [p.strip() for p in s.split(",") if p.strip()]
        sample = default[0] if default else ""
        if isinstance(sample, (int, float)) and not isinstance(sample, bool):
            return tuple(type(sample)(float(p)) if isinstance(sample, int) else float(p) for p in parts)
        return tuple(parts)
    if "int" in annotation.split("|")[0] or (isinstance(default, int) and "float" not in annotation):
        try:
            return int(s)
        except ValueError:
            raise ConfigError(f"expected an integer, got {raw!r}") from None
    if "float" in annotation or isinstance(default, float):
        try:
            return float(s)
        except ValueError:
            raise ConfigError(f"expected a number, got {raw!r}") from None
    return s


def _apply(section_obj, key: str, raw: str, where: str):
    fields = {f.name: f for f in dataclasses.fields(section_obj)}
    if key not in fields:
        raise ConfigError(f"{where}: unknown key {key!r}")
    f = fields[key]
    value = _coerce(raw, str(f.type), getattr(section_obj, key))
    setattr(section_obj, key, value)


def _revalidate(cfg: RunConfig) -> RunConfig:
    try:
        cfg.split.intervened_allocation = tuple(float(x) for x in cfg.split.intervened_allocation)
        cfg.split.validate()
        cfg.train.__post_init__()
        if cfg.evaluate.iou_reference not in ("recommended", "global"):
            raise ValueError(f"evaluate.iou_reference must be 'global' or 'recommended', "
                             f"got {cfg.evaluate.iou_reference!r}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the file at ``path`` (if any), then ``section.key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if not hasattr(cfg, section):
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                _apply(getattr(cfg, section), key, raw, f"{path} [{section}]")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, raw = item.split("=", 1)
        section, key = lhs.split(".", 1)
        if not hasattr(cfg, section):
            raise ConfigError(f"override {item!r}: unknown section {section!r}")
        _apply(getattr(cfg, section), key, raw, f"override {item!r}")
    return _revalidate(cfg)
