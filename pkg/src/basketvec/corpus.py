"""Basket-transaction corpus: parsing, activity filtering, reindexing, splits.

The raw input is delimited text with one (user, item, order, timestamp) row
per purchase. Everything downstream works on an immutable in-memory
``Interactions`` value: filtering drops low-activity users/items, ``reindex``
assigns dense integer ids, and ``temporal_split`` partitions whole orders
into train/test by basket time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable

from .errors import CorpusError, ParseError


@dataclass(frozen=True)
class InteractionRecord:
    """One purchase: a user bought an item in an order at a basket time."""

    user_id: str
    item_id: str
    order_id: str
    timestamp: int


@dataclass(frozen=True)
class Interactions:
    """A purchase log plus the id universes it spans.

    ``users``/``items``/``orders`` are the distinct ids occurring in
    ``records``, sorted lexicographically. Duplicate records are retained;
    their multiplicity feeds triple statistics downstream.
    """

    records: tuple[InteractionRecord, ...]
    users: tuple[str, ...]
    items: tuple[str, ...]
    orders: tuple[str, ...]

    @classmethod
    def from_records(cls, records: Iterable[InteractionRecord]) -> "Interactions":
        """Build an ``Interactions`` value, computing universes and checking
        that every order belongs to exactly one user."""
        recs = tuple(records)
        order_user: dict[str, str] = {}
        for r in recs:
            owner = order_user.setdefault(r.order_id, r.user_id)
            if owner != r.user_id:
                raise CorpusError(
                    f"order {r.order_id!r} appears under users {owner!r} and {r.user_id!r}"
                )
        users = tuple(sorted({r.user_id for r in recs}))
        items = tuple(sorted({r.item_id for r in recs}))
        orders = tuple(sorted(order_user))
        return cls(records=recs, users=users, items=items, orders=orders)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_orders(self) -> int:
        return len(self.orders)


@dataclass(frozen=True)
class ColumnSpec:
    """Names of the required columns in a delimited interaction file."""

    user: str = "user_id"
    item: str = "item_id"
    order: str = "order_id"
    time: str = "timestamp"
    delimiter: str = ","


@dataclass(frozen=True)
class IdMaps:
    """Dense, gap-free external-id -> index maps for users and items."""

    user_map: dict[str, int]
    item_map: dict[str, int]

    @classmethod
    def from_universes(cls, users: Iterable[str], items: Iterable[str]) -> "IdMaps":
        return cls(
            user_map={u: i for i, u in enumerate(sorted(set(users)))},
            item_map={v: i for i, v in enumerate(sorted(set(items)))},
        )

    @property
    def n_users(self) -> int:
        return len(self.user_map)

    @property
    def n_items(self) -> int:
        return len(self.item_map)


@dataclass(frozen=True)
class SplitDataset:
    """Train/test partition of an interaction log at order granularity."""

    train: Interactions
    test: Interactions
    split_ratio: float


def parse_interactions(
    source: Iterable[str] | IO[str], columns: ColumnSpec = ColumnSpec()
) -> Interactions:
    """Parse header-plus-rows delimited text into an ``Interactions`` value.

    Duplicate rows are kept. Raises ``ParseError`` with the offending line
    number for malformed rows (wrong column count, bad timestamp, empty id)
    and ``CorpusError`` for a missing header or an input with no data rows.
    """
    reader = csv.reader(source, delimiter=columns.delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise CorpusError("empty input: no header row") from None

    positions = {}
    for role, name in (
        ("user", columns.user),
        ("item", columns.item),
        ("order", columns.order),
        ("time", columns.time),
    ):
        if name not in header:
            raise CorpusError(f"missing column {name!r} in header {header}")
        positions[role] = header.index(name)

    records = []
    for row in reader:
        line_no = reader.line_num
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} columns, found {len(row)}", line_no
            )
        user = row[positions["user"]].strip()
        item = row[positions["item"]].strip()
        order = row[positions["order"]].strip()
        raw_time = row[positions["time"]].strip()
        if not user or not item or not order:
            raise ParseError("empty id field", line_no)
        try:
            timestamp = int(raw_time)
        except ValueError:
            raise ParseError(f"unparseable timestamp {raw_time!r}", line_no) from None
        if timestamp < 0:
            raise ParseError(f"negative timestamp {timestamp}", line_no)
        records.append(InteractionRecord(user, item, order, timestamp))

    if not records:
        raise CorpusError("empty input: no data rows")
    return Interactions.from_records(records)


def write_interactions(
    data: Interactions, sink: IO[str], columns: ColumnSpec = ColumnSpec()
) -> None:
    """Write ``data`` in the same delimited format ``parse_interactions`` reads."""
    writer = csv.writer(sink, delimiter=columns.delimiter, lineterminator="\n")
    writer.writerow([columns.user, columns.item, columns.order, columns.time])
    for r in data.records:
        writer.writerow([r.user_id, r.item_id, r.order_id, r.timestamp])


def filter_dataset(
    data: Interactions,
    min_orders_per_user: int = 7,
    min_items_per_user: int = 30,
    min_users_per_item: int = 16,
) -> Interactions:
    """Drop low-activity users, then low-support items, in one pass.

    A user survives with at least ``min_orders_per_user`` distinct orders and
    ``min_items_per_user`` distinct items; an item survives when bought by at
    least ``min_users_per_item`` distinct surviving users. Item removal can
    push a user back under its thresholds; no fixpoint iteration is applied.
    """
    if min(min_orders_per_user, min_items_per_user, min_users_per_item) < 0:
        raise ValueError("thresholds must be >= 0")

    user_orders: dict[str, set[str]] = {}
    user_items: dict[str, set[str]] = {}
    for r in data.records:
        user_orders.setdefault(r.user_id, set()).add(r.order_id)
        user_items.setdefault(r.user_id, set()).add(r.item_id)
    kept_users = {
        u
        for u in user_orders
        if len(user_orders[u]) >= min_orders_per_user
        and len(user_items[u]) >= min_items_per_user
    }

    item_users: dict[str, set[str]] = {}
    for r in data.records:
        if r.user_id in kept_users:
            item_users.setdefault(r.item_id, set()).add(r.user_id)
    kept_items = {i for i, us in item_users.items() if len(us) >= min_users_per_item}

    kept = [
        r for r in data.records if r.user_id in kept_users and r.item_id in kept_items
    ]
    if not kept:
        raise CorpusError(
            "filtering removed every record; thresholds are too strict for this corpus"
        )
    return Interactions.from_records(kept)


def order_timestamps(data: Interactions) -> dict[str, int]:
    """Map each order id to its single basket timestamp.

    Raises ``CorpusError`` if any order carries more than one timestamp.
    """
    stamps: dict[str, int] = {}
    for r in data.records:
        seen = stamps.setdefault(r.order_id, r.timestamp)
        if seen != r.timestamp:
            raise CorpusError(
                f"order {r.order_id!r} has conflicting timestamps {seen} and {r.timestamp}"
            )
    return stamps


def temporal_split(data: Interactions, ratio: float = 0.8) -> SplitDataset:
    """Partition whole orders into train/test by ascending basket time.

    Orders are sorted by (timestamp, order_id); the first ``ceil(ratio * L)``
    go to train and the remainder to test. All records of an order land on
    the same side.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    if data.n_orders < 2:
        raise CorpusError("need at least 2 orders to split")

    stamps = order_timestamps(data)
    ordered = sorted(stamps, key=lambda o: (stamps[o], o))
    n_train = math.ceil(ratio * len(ordered))
    train_orders = set(ordered[:n_train])

    train_recs = [r for r in data.records if r.order_id in train_orders]
    test_recs = [r for r in data.records if r.order_id not in train_orders]
    return SplitDataset(
        train=Interactions.from_records(train_recs),
        test=Interactions.from_records(test_recs),
        split_ratio=ratio,
    )


def reindex(data: Interactions) -> IdMaps:
    """Dense lexicographic external-id -> index maps for ``data``'s universes."""
    if not data.records:
        raise CorpusError("cannot reindex an empty dataset")
    return IdMaps.from_universes(data.users, data.items)
