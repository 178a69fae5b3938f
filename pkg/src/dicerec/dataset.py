"""Rating ingestion, binarization and the indexed interaction table."""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

RATING_MIN = 0.5
RATING_MAX = 5.0

TABLE_MAGIC = b"DICETBL\x00"
TABLE_VERSION = 1


class ParseError(ValueError):
    def __init__(self, line_no: int, line: str, reason: str):
        super().__init__(f"line {line_no}: {reason}: {line!r}")
        self.line_no = line_no


@dataclass(frozen=True)
class RatingFormat:
    delimiter: str = "::"
    # positions of user, item, rating, timestamp (timestamp may be None)
    columns: tuple = (0, 1, 2, 3)
    skip_header: bool = False


@dataclass(frozen=True)
class RawRating:
    user_tag: str
    item_tag: str
    rating: float
    timestamp: int | None = None


def _as_text_lines(source) -> Iterable[str]:
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    if isinstance(source, str):
        source = io.StringIO(source)
    for raw in source:
        if isinstance(raw, (bytes, bytearray)):
            raw = raw.decode("utf-8")
        yield raw


def parse_ratings(source: IO | bytes | str, fmt: RatingFormat = RatingFormat()) -> list[RawRating]:
    """Parse a line-oriented ratings stream.

    Blank lines are skipped. Any other line that does not yield a non-empty
    user/item tag and a numeric rating in [0.5, 5] raises ParseError with the
    1-based line number.
    """
    ui, ii, ri, ti = fmt.columns
    out = []
    for line_no, line in enumerate(_as_text_lines(source), start=1):
        line = line.strip()
        if not line:
            continue
        if fmt.skip_header and line_no == 1:
            continue
        parts = line.split(fmt.delimiter)
        needed = max(ui, ii, ri)
        if len(parts) <= needed:
            raise ParseError(line_no, line, "too few fields")
        user, item = parts[ui].strip(), parts[ii].strip()
        if not user or not item:
            raise ParseError(line_no, line, "empty user or item tag")
        try:
            rating = float(parts[ri])
        except ValueError:
            raise ParseError(line_no, line, "non-numeric rating") from None
        if not (RATING_MIN <= rating <= RATING_MAX):
            raise ParseError(line_no, line, "rating out of range")
        ts = None
        if ti is not None and ti < len(parts) and parts[ti].strip():
            try:
                ts = int(parts[ti])
            except ValueError:
                raise ParseError(line_no, line, "non-integer timestamp") from None
        out.append(RawRating(user, item, rating, ts))
    return out


def binarize(ratings: Sequence[RawRating], threshold: float = 5.0) -> list[tuple[str, str]]:
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return [(r.user_tag, r.item_tag) for r in ratings if r.rating >= threshold]


@dataclass(frozen=True)
class InteractionTable:
    """Deduplicated implicit feedback with dense indices.

    ``users`` and ``items`` are parallel int arrays (one entry per record);
    ``user_tags[k]`` / ``item_tags[k]`` give the external tag of dense index k.
    """

    users: np.ndarray
    items: np.ndarray
    user_tags: tuple = ()
    item_tags: tuple = ()
    popularity: np.ndarray = field(default=None)

    def __post_init__(self):
        users = np.ascontiguousarray(self.users, dtype=np.int64)
        items = np.ascontiguousarray(self.items, dtype=np.int64)
        users.setflags(write=False)
        items.setflags(write=False)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        pop = np.bincount(items, minlength=self.n_items).astype(np.int64)
        pop.setflags(write=False)
        object.__setattr__(self, "popularity", pop)

    @property
    def n_users(self) -> int:
        return len(self.user_tags)

    @property
    def n_items(self) -> int:
        return len(self.item_tags)

    def __len__(self) -> int:
        return len(self.users)

    @property
    def records(self) -> list[tuple[int, int]]:
        return list(zip(self.users.tolist(), self.items.tolist()))

    def user_index(self, tag: str) -> int:
        return self._user_lookup()[tag]

    def item_index(self, tag: str) -> int:
        return self._item_lookup()[tag]

    def _user_lookup(self):
        return {t: k for k, t in enumerate(self.user_tags)}

    def _item_lookup(self):
        return {t: k for k, t in enumerate(self.item_tags)}

    @classmethod
    def from_indices(cls, users, items, n_users: int, n_items: int) -> "InteractionTable":
        """Build from already-dense indices; tags are the decimal indices."""
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        if len(users) and (users.max() >= n_users or items.max() >= n_items):
            raise ValueError("index out of range")
        keys = users * max(n_items, 1) + items
        _, first = np.unique(keys, return_index=True)
        first.sort()
        return cls(users[first], items[first],
                   tuple(str(k) for k in range(n_users)),
                   tuple(str(k) for k in range(n_items)))


def build_table(pairs: Iterable[tuple[str, str]]) -> InteractionTable:
    user_ix: dict = {}
    item_ix: dict = {}
    seen = set()
    users, items = [], []
    for u, i in pairs:
        uk = user_ix.setdefault(u, len(user_ix))
        ik = item_ix.setdefault(i, len(item_ix))
        if (uk, ik) in seen:
            continue
        seen.add((uk, ik))
        users.append(uk)
        items.append(ik)
    return InteractionTable(np.array(users, dtype=np.int64), np.array(items, dtype=np.int64),
                            tuple(user_ix), tuple(item_ix))


def interaction_entropy(popularity) -> float:
    """Shannon entropy (nats) of the item interaction distribution."""
    p = np.asarray(popularity, dtype=np.float64)
    total = p.sum()
    if total <= 0:
        raise ValueError("entropy undefined for an all-zero count vector")
    q = p[p > 0] / total
    return float(max(0.0, -(q * np.log(q)).sum()))


def load_ratings_file(path, fmt: RatingFormat | None = None) -> list[RawRating]:
    """Read a ratings file, sniffing "::" vs "," and a CSV header line if no format is given."""
    path = Path(path)
    if fmt is None:
        with open(path, "rb") as fh:
            head = fh.readline().decode("utf-8", "replace")
        delim = "::" if "::" in head else ","
        parts = head.split(delim)
        try:
            float(parts[2])
            header = False
        except (IndexError, ValueError):
            header = bool(head.strip())
        fmt = RatingFormat(delimiter=delim, skip_header=header)
    with open(path, "rb") as fh:
        return parse_ratings(fh, fmt)


# Binary cache layout (all little-endian):
#   8s magic | u32 version | u64 n_users | u64 n_items | u64 n_records
#   i64[n_records] users | i64[n_records] items
#   u64 tag_json_len | utf-8 JSON {"users": [...], "items": [...]}
_HEADER = struct.Struct("<8sIQQQ")


def save_table(table: InteractionTable, path) -> None:
    tags = json.dumps({"users": list(table.user_tags), "items": list(table.item_tags)}).encode()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TABLE_MAGIC, TABLE_VERSION, table.n_users, table.n_items, len(table)))
        fh.write(table.users.astype("<i8").tobytes())
        fh.write(table.items.astype("<i8").tobytes())
        fh.write(struct.pack("<Q", len(tags)))
        fh.write(tags)


def load_table(path) -> InteractionTable:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, m, n, r = _HEADER.unpack_from(data, 0)
    if magic != TABLE_MAGIC:
        raise ValueError(f"{path}: not an interaction table cache")
    if version != TABLE_VERSION:
        raise ValueError(f"{path}: unsupported table version {version}")
    off = _HEADER.size
    users = np.frombuffer(data, "<i8", r, off).astype(np.int64)
    off += 8 * r
    items = np.frombuffer(data, "<i8", r, off).astype(np.int64)
    off += 8 * r
    (tlen,) = struct.unpack_from("<Q", data, off)
    tags = json.loads(data[off + 8: off + 8 + tlen])
    assert len(tags["users"]) == m and len(tags["items"]) == n
    return InteractionTable(users, items, tuple(tags["users"]), tuple(tags["items"]))


def max_entropy(n_items: int) -> float:
    return math.log(n_items) if n_items > 0 else 0.0
