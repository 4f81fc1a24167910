"""Synthetic basket corpora with planted user/item cluster structure.

Users and items are assigned to clusters round-robin (entity n belongs to
cluster n mod n_clusters), so clusters are exactly balanced. Each order
fills ``items_per_order`` distinct items; every slot draws from the user's
own cluster with probability ``in_cluster_prob`` and uniformly from all
items otherwise. A model that recovers the clusters will rank in-cluster
items above out-cluster ones, which is what the planted-structure checks
assert.

Orders are generated round-robin across users with a single incrementing
timestamp, so a temporal split leaves every user with both early (train)
and late (test) orders.

``user_pool_size`` optionally narrows each user's in-cluster draws to a
fixed per-user subset of their cluster's items. Without it, in-cluster
items are exchangeable given the cluster, which caps how well any
recommender can rank one user's future items; per-user pools plant
user-level preferences that are actually learnable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import InteractionRecord, Interactions
from .errors import SamplingError

# retries per item slot before concluding the candidate pool is too tight
_SLOT_ATTEMPTS = 100


@dataclass(frozen=True)
class SynthConfig:
    n_users: int
    n_items: int
    n_clusters: int
    orders_per_user: int
    items_per_order: int
    in_cluster_prob: float
    seed: int
    user_pool_size: int | None = None

    def __post_init__(self) -> None:
        if self.n_users < 1 or self.n_items < 1:
            raise ValueError("n_users and n_items must be >= 1")
        if not 1 <= self.n_clusters <= min(self.n_users, self.n_items):
            raise ValueError(
                f"n_clusters must be in [1, min(n_users, n_items)], got {self.n_clusters}"
            )
        if self.orders_per_user < 1:
            raise ValueError(f"orders_per_user must be >= 1, got {self.orders_per_user}")
        if self.items_per_order < 2:
            raise ValueError(f"items_per_order must be >= 2, got {self.items_per_order}")
        if not 0.0 <= self.in_cluster_prob <= 1.0:
            raise ValueError(f"in_cluster_prob must be in [0, 1], got {self.in_cluster_prob}")
        if self.user_pool_size is not None and self.user_pool_size < 2:
            raise ValueError(f"user_pool_size must be >= 2, got {self.user_pool_size}")


def item_clusters(cfg: SynthConfig) -> np.ndarray:
    """Cluster id of every item dense index (round-robin assignment)."""
    return np.arange(cfg.n_items) % cfg.n_clusters


def user_clusters(cfg: SynthConfig) -> np.ndarray:
    """Cluster id of every user dense index (round-robin assignment)."""
    return np.arange(cfg.n_users) % cfg.n_clusters


def _user_pools(cfg: SynthConfig, rng: np.random.Generator) -> list[np.ndarray]:
    clusters = item_clusters(cfg)
    members = [np.flatnonzero(clusters == c) for c in range(cfg.n_clusters)]
    pools = []
    for u in range(cfg.n_users):
        cluster = members[u % cfg.n_clusters]
        if cfg.user_pool_size is None:
            pools.append(cluster)
            continue
        if cfg.user_pool_size > cluster.size:
            raise ValueError(
                f"user_pool_size {cfg.user_pool_size} exceeds cluster size {cluster.size}"
            )
        pools.append(np.sort(rng.choice(cluster, size=cfg.user_pool_size, replace=False)))
    return pools


def generate(cfg: SynthConfig) -> Interactions:
    """Build a seed-deterministic corpus; same id format ingestion reads.

    External ids are zero-padded ("u007", "i012", "o0042") so lexicographic
    and numeric order agree; after reindexing, dense id n is entity n.
    """
    if cfg.items_per_order > cfg.n_items:
        raise ValueError(
            f"items_per_order {cfg.items_per_order} exceeds n_items {cfg.n_items}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
    pools = _user_pools(cfg, rng)
    if cfg.in_cluster_prob == 1.0:
        tightest = min(pool.size for pool in pools)
        if cfg.items_per_order > tightest:
            raise ValueError(
                f"items_per_order {cfg.items_per_order} exceeds the in-cluster "
                f"pool size {tightest} with in_cluster_prob=1"
            )

    uw = len(str(cfg.n_users - 1))
    iw = len(str(cfg.n_items - 1))
    total_orders = cfg.n_users * cfg.orders_per_user
    ow = len(str(total_orders - 1))

    records: list[InteractionRecord] = []
    t = 0
    for _round in range(cfg.orders_per_user):
        for u in range(cfg.n_users):
            chosen: list[int] = []
            for _slot in range(cfg.items_per_order):
                for _attempt in range(_SLOT_ATTEMPTS):
                    if rng.random() < cfg.in_cluster_prob:
                        pool = pools[u]
                        cand = int(pool[rng.integers(pool.size)])
                    else:
                        cand = int(rng.integers(cfg.n_items))
                    if cand not in chosen:
                        chosen.append(cand)
                        break
                else:
                    raise SamplingError(
                        f"could not fill an order with {cfg.items_per_order} "
                        f"distinct items after {_SLOT_ATTEMPTS} attempts per slot"
                    )
            user_id = f"u{u:0{uw}d}"
            order_id = f"o{t:0{ow}d}"
            for item in chosen:
                records.append(
                    InteractionRecord(
                        user_id=user_id,
                        item_id=f"i{item:0{iw}d}",
                        order_id=order_id,
                        timestamp=t,
                    )
                )
            t += 1
    return Interactions.from_records(records)
