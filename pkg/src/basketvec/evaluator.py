"""Recall@K / NDCG@K against held-out baskets, plus a paired t-test.

Ground truth for a user is the union of items across all their held-out
orders. Metrics are macro-averaged: every evaluable user counts once, and
users with no held-out items are skipped entirely rather than scored zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .corpus import IdMaps, Interactions
from .errors import DegenerateComparisonError, EvaluationError, NoRelevantItems
from .recommender import next_basket_scores, top_k


@dataclass(frozen=True)
class UserMetrics:
    user: int
    recall: float
    ndcg: float


@dataclass(frozen=True)
class MetricsReport:
    """Per-user metrics at cutoff ``k`` with their macro means."""

    k: int
    per_user: tuple[UserMetrics, ...]
    recall_mean: float
    ndcg_mean: float

    @property
    def users(self) -> int:
        return len(self.per_user)


def relevant_items(test: Interactions, user: int, id_maps: IdMaps) -> set[int]:
    """Union of a user's held-out items, as dense ids.

    ``user`` is a dense id. Records whose user or item is outside the maps
    are ignored; a user absent from the split yields the empty set.
    """
    out: set[int] = set()
    for rec in test.records:
        if id_maps.user_map.get(rec.user_id) != user:
            continue
        dense_item = id_maps.item_map.get(rec.item_id)
        if dense_item is not None:
            out.add(dense_item)
    return out


def recall_at_k(ranked: Sequence[int], relevant: set[int], k: int) -> float:
    """Fraction of the relevant set appearing in the first K ranked items."""
    if not relevant:
        raise NoRelevantItems("recall undefined for an empty relevant set")
    hits = len(set(ranked[:k]) & relevant)
    return hits / len(relevant)


def ndcg_at_k(ranked: Sequence[int], relevant: set[int], k: int) -> float:
    """Binary-gain NDCG: DCG over the top K, normalized by the ideal DCG.

    DCG = sum over ranks r (1-based) of [ranked[r] relevant] / log2(r+1);
    the ideal list packs min(K, |relevant|) hits at the top.
    """
    if not relevant:
        raise NoRelevantItems("ndcg undefined for an empty relevant set")
    dcg = 0.0
    for r, item in enumerate(ranked[:k], start=1):
        if item in relevant:
            dcg += 1.0 / np.log2(r + 1)
    idcg = sum(1.0 / np.log2(r + 1) for r in range(1, min(k, len(relevant)) + 1))
    return dcg / idcg


def evaluate(
    zu: np.ndarray,
    zi: np.ndarray,
    test: Interactions,
    k: int,
    id_maps: IdMaps,
) -> MetricsReport:
    """Score every evaluable user and macro-average both metrics.

    A user is evaluable when their held-out relevant set is nonempty. Users
    are processed in dense-id order so reruns aggregate identically.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    per_user = []
    for user in range(zu.shape[0]):
        relevant = relevant_items(test, user, id_maps)
        if not relevant:
            continue
        ranked = [item for item, _ in top_k(next_basket_scores(user, zu, zi), k)]
        per_user.append(
            UserMetrics(
                user=user,
                recall=recall_at_k(ranked, relevant, k),
                ndcg=ndcg_at_k(ranked, relevant, k),
            )
        )
    if not per_user:
        raise EvaluationError("no user has held-out items; nothing to evaluate")
    return MetricsReport(
        k=k,
        per_user=tuple(per_user),
        recall_mean=float(np.mean([m.recall for m in per_user])),
        ndcg_mean=float(np.mean([m.ndcg for m in per_user])),
    )


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Paired t statistic on d = a - b and its two-sided p-value.

    p comes from the Student-t survival function via the regularized
    incomplete beta identity p = I_{df/(df+t^2)}(df/2, 1/2) with df = n - 1.
    Zero-variance differences (e.g. comparing a system against itself) make
    the statistic undefined and raise instead of returning infinity.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired vectors must be 1-d and equal-length, got {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        raise ValueError(f"need at least 2 pairs, got {n}")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0.0:
        raise DegenerateComparisonError(
            "difference vector has zero variance; t statistic undefined"
        )
    t = d.mean() / (sd / np.sqrt(n))
    df = n - 1
    p = betainc(df / 2.0, 0.5, df / (df + t * t))
    return float(t), float(p)
