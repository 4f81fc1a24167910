"""Triple sampling from training baskets and negative-triple corruption.

Positive triples (user, item_a, item_b) pair two distinct items bought by
the same user in the same order. Sampling picks an eligible order uniformly,
then an unordered item pair uniformly inside it, so large baskets are not
over-weighted. Negatives corrupt one uniformly chosen slot of a positive
and are rejected (and resampled) whenever they land back in the positive
multiset.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple

import numpy as np

from .corpus import IdMaps, Interactions, reindex
from .errors import SamplingError


class Triple(NamedTuple):
    """A (user, item_a, item_b) co-purchase tuple over dense indices.

    Positives are canonical (item_a <= item_b) with distinct items that
    co-occur in one of the user's orders; corrupted negatives carry no such
    guarantee and may even repeat an item.
    """

    user: int
    item_a: int
    item_b: int


@dataclass(frozen=True)
class TripleBatch:
    """Distinct positive triples with multiplicities, plus paired negatives.

    ``positives`` is a (P, 3) int array of distinct canonical triples sorted
    lexicographically, ``counts`` the per-triple multiplicity n+, and
    ``negatives`` a (Q, 3) int array with Q = neg_ratio * (number of sampled
    positive occurrences).
    """

    positives: np.ndarray
    counts: np.ndarray
    negatives: np.ndarray
    neg_ratio: int

    @property
    def n_positive_draws(self) -> int:
        return int(self.counts.sum())


def _eligible_orders(
    train: Interactions, id_maps: IdMaps
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flatten orders with >= 2 distinct items into lookup arrays.

    Returns (order_user, order_size, offsets, flat_items): per eligible order
    its dense user, distinct item count, start offset into the flattened
    sorted item array.
    """
    by_order: dict[str, tuple[str, set[str]]] = {}
    for r in train.records:
        entry = by_order.setdefault(r.order_id, (r.user_id, set()))
        entry[1].add(r.item_id)

    order_user, order_size, flat_items, offsets = [], [], [], []
    for order_id in sorted(by_order):
        user_id, item_ids = by_order[order_id]
        if len(item_ids) < 2:
            continue
        dense = sorted(id_maps.item_map[i] for i in item_ids)
        offsets.append(len(flat_items))
        flat_items.extend(dense)
        order_user.append(id_maps.user_map[user_id])
        order_size.append(len(dense))
    return (
        np.asarray(order_user, dtype=np.int64),
        np.asarray(order_size, dtype=np.int64),
        np.asarray(offsets, dtype=np.int64),
        np.asarray(flat_items, dtype=np.int64),
    )


def sample_triples(
    train: Interactions,
    count: int,
    rng: np.random.Generator,
    id_maps: IdMaps | None = None,
) -> list[Triple]:
    """Draw ``count`` positive triples from the training baskets.

    Each draw picks an order uniformly among those with >= 2 distinct items,
    then an unordered pair of distinct items uniformly within it. The result
    is fully determined by (train, count, rng state).
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if id_maps is None:
        id_maps = reindex(train)
    order_user, order_size, offsets, flat_items = _eligible_orders(train, id_maps)
    if order_user.size == 0:
        raise SamplingError("no order contains two distinct items; nothing to sample")

    picks = rng.integers(0, order_user.size, size=count)
    sizes = order_size[picks]
    first = rng.integers(0, sizes)
    second = rng.integers(0, sizes - 1)
    second = second + (second >= first)  # uniform over ordered distinct pairs

    base = offsets[picks]
    item_a = flat_items[base + first]
    item_b = flat_items[base + second]
    lo = np.minimum(item_a, item_b)
    hi = np.maximum(item_a, item_b)
    users = order_user[picks]
    return [Triple(int(u), int(a), int(b)) for u, a, b in zip(users, lo, hi)]


def sample_negatives(
    positives: list[Triple],
    neg_ratio: int,
    n_users: int,
    n_items: int,
    rng: np.random.Generator,
    retry_budget: int = 100,
) -> TripleBatch:
    """Pair each positive with ``neg_ratio`` corrupted triples.

    A corruption replaces one uniformly chosen slot (user, item_a or item_b)
    with a uniform id of matching kind, re-canonicalizing item order. Any
    corruption that collides with the positive multiset is redrawn, up to
    ``retry_budget`` rounds; exhaustion means the id universes are too small
    to host true negatives.
    """
    if neg_ratio < 1:
        raise ValueError("neg_ratio must be >= 1")
    if n_items < 2:
        raise ValueError("need at least 2 items to corrupt triples")
    if not positives:
        raise ValueError("positives must be non-empty")

    pos_counter = Counter(positives)
    pos_set = set(pos_counter)

    n_neg = neg_ratio * len(positives)
    base = np.asarray(positives, dtype=np.int64)
    negatives = np.repeat(base, neg_ratio, axis=0)

    pending = np.arange(n_neg)
    for _ in range(retry_budget):
        slots = rng.integers(0, 3, size=pending.size)
        new_users = rng.integers(0, n_users, size=pending.size)
        new_items = rng.integers(0, n_items, size=pending.size)

        cand = negatives[pending].copy()
        cand[slots == 0, 0] = new_users[slots == 0]
        cand[slots == 1, 1] = new_items[slots == 1]
        cand[slots == 2, 2] = new_items[slots == 2]
        a = np.minimum(cand[:, 1], cand[:, 2])
        cand[:, 2] = np.maximum(cand[:, 1], cand[:, 2])
        cand[:, 1] = a

        collides = np.fromiter(
            ((int(u), int(i), int(j)) in pos_set for u, i, j in cand),
            dtype=bool,
            count=cand.shape[0],
        )
        negatives[pending[~collides]] = cand[~collides]
        pending = pending[collides]
        if pending.size == 0:
            break
    else:
        raise SamplingError(
            f"negative sampling exhausted {retry_budget} retries for "
            f"{pending.size} corruptions; id universes too small"
        )

    distinct = sorted(pos_counter)
    return TripleBatch(
        positives=np.asarray(distinct, dtype=np.int64),
        counts=np.asarray([pos_counter[t] for t in distinct], dtype=np.int64),
        negatives=negatives,
        neg_ratio=neg_ratio,
    )


def write_triple_counts(batch_positives: Iterable[tuple[int, int, int]],
                        counts: Iterable[int], sink: IO[str]) -> None:
    """Dump distinct triples as "user<TAB>item_a<TAB>item_b<TAB>count" lines."""
    for (u, a, b), c in zip(batch_positives, counts):
        sink.write(f"{u}\t{a}\t{b}\t{c}\n")


def read_triple_counts(source: Iterable[str]) -> tuple[list[Triple], np.ndarray]:
    """Inverse of ``write_triple_counts``: distinct triples and their counts."""
    triples, counts = [], []
    for line in source:
        line = line.strip()
        if not line:
            continue
        u, a, b, c = line.split("\t")
        triples.append(Triple(int(u), int(a), int(b)))
        counts.append(int(c))
    return triples, np.asarray(counts, dtype=np.int64)
