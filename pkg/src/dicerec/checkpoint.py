"""Binary model checkpoints.

Layout (little-endian)::

    8s   magic  b"DICECKPT"
    u32  format version
    u64  header length H
    H    UTF-8 JSON header {"kind", "tables": [[name, rows, cols], ...], "meta"}
    f64  table data, row-major, in header order
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .baselines import CausEModel, FactorModel
from .evaluator import PopularityScorer
from .model import TABLES, CausalEmbeddings

MAGIC = b"DICECKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def _tables_of(model) -> dict:
    if isinstance(model, PopularityScorer):
        return {"popularity": model.popularity.reshape(-1, 1)}
    return model.tables


def save_checkpoint(model, path, meta: dict | None = None) -> None:
    tables = _tables_of(model)
    names = list(TABLES) if isinstance(model, CausalEmbeddings) else sorted(tables)
    header = {
        "kind": model.kind,
        "tables": [[n, int(tables[n].shape[0]), int(tables[n].shape[1])] for n in names],
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(hbytes)))
        fh.write(hbytes)
        for n in names:
            fh.write(np.ascontiguousarray(tables[n], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (model, header)."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, hlen = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = _PREFIX.size
    header = json.loads(data[off:off + hlen])
    off += hlen
    tables = {}
    for name, rows, cols in header["tables"]:
        count = rows * cols
        tables[name] = np.frombuffer(data, "<f8", count, off).reshape(rows, cols).copy()
        off += 8 * count
    kind = header["kind"]
    if kind == "dice":
        model = CausalEmbeddings(*(tables[n] for n in TABLES))
    elif kind == "cause":
        model = CausEModel(tables)
    elif kind == "itempop":
        model = PopularityScorer(tables["popularity"][:, 0])
    else:
        model = FactorModel(tables["user"], tables["item"], tables.get("user_bias"), tables.get("item_bias"), kind)
    return model, header


def model_shape(model) -> tuple[int | None, int]:
    """(n_users, n_items); ItemPop has no user dimension."""
    if isinstance(model, PopularityScorer):
        return None, model.n_items
    return model.n_users, model.n_items
