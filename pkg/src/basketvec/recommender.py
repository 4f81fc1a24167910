"""Score items for a user and rank the top K.

Two scoring modes over trained latent matrices:

  next-basket:   s_ui = z_u . z_i over every item i
  within-basket: s_ui = (z_u + sum of the basket's item latents) . z_i,
                 with the basket's own items pinned to -inf so they are
                 never re-recommended

The candidate set is always all items; previously purchased items are not
excluded (repurchase is the norm in grocery baskets). In variational mode
the posterior means are the default point representation; sampling a z
instead is available for callers that want stochastic rankings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import EncoderParams, encode, reparameterize


@dataclass(frozen=True)
class RankedResult:
    """Top-K recommendation list for one user.

    ``items`` holds (item dense id, score) pairs with non-increasing scores,
    distinct items, and ties broken by ascending item id.
    """

    user: int
    items: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        ids = [i for i, _ in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("ranked items must be distinct")
        scores = [s for _, s in self.items]
        if any(s0 < s1 for s0, s1 in zip(scores, scores[1:])):
            raise ValueError("ranked scores must be non-increasing")


def point_embeddings(
    params: EncoderParams,
    sample: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Materialize one latent matrix per side for scoring.

    Default: posterior means (seed-free, the deterministic test-time
    choice). With ``sample=True`` a reparameterized draw is used instead and
    ``rng`` must be given. Deterministic-mode params always yield means.
    """
    g_u = encode(params, "user", np.arange(params.n_users))
    g_i = encode(params, "item", np.arange(params.n_items))
    if sample:
        if rng is None:
            raise ValueError("sample=True requires an rng")
        zu = reparameterize(g_u, rng.standard_normal(g_u.mu.shape), params.mode)
        zi = reparameterize(g_i, rng.standard_normal(g_i.mu.shape), params.mode)
        return zu, zi
    return g_u.mu.copy(), g_i.mu.copy()


def next_basket_scores(user: int, zu: np.ndarray, zi: np.ndarray) -> np.ndarray:
    """Dot-product preference scores of one user against every item."""
    if not 0 <= user < zu.shape[0]:
        raise IndexError(f"user index {user} out of range [0, {zu.shape[0]})")
    return zi @ zu[user]


def within_basket_scores(
    user: int, basket: Iterable[int], zu: np.ndarray, zi: np.ndarray
) -> np.ndarray:
    """Scores for completing a partially filled basket.

    The query vector is the user latent plus the sum of the basket's item
    latents. Basket members get -inf; with an empty basket this reduces to
    next_basket_scores.
    """
    if not 0 <= user < zu.shape[0]:
        raise IndexError(f"user index {user} out of range [0, {zu.shape[0]})")
    members = np.asarray(sorted(set(basket)), dtype=np.int64)
    if members.size and (members.min() < 0 or members.max() >= zi.shape[0]):
        raise IndexError(f"basket item out of range [0, {zi.shape[0]})")
    query = zu[user] + zi[members].sum(axis=0) if members.size else zu[user].copy()
    scores = zi @ query
    scores[members] = -np.inf
    return scores


def top_k(scores: Sequence[float], k: int) -> list[tuple[int, float]]:
    """The K best (item, score) pairs, ties broken by ascending item id.

    Equals the length-K prefix of a full sort by (score desc, id asc).
    Exact -inf entries mark excluded candidates and are never returned; if
    fewer than K candidates remain, all of them are.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    s = np.asarray(scores, dtype=np.float64)
    ids = np.flatnonzero(s != -np.inf)
    # last lexsort key is primary: score descending, then id ascending
    order = ids[np.lexsort((ids, -s[ids]))][:k]
    return [(int(i), float(s[i])) for i in order]


def recommend(user: int, zu: np.ndarray, zi: np.ndarray, k: int) -> RankedResult:
    """Next-basket top-K for one user as a RankedResult."""
    return RankedResult(user=user, items=tuple(top_k(next_basket_scores(user, zu, zi), k)))


def write_rankings(results: Iterable[RankedResult], sink) -> None:
    """Dump rankings as "user<TAB>rank<TAB>item<TAB>score" lines (rank is 1-based)."""
    for res in results:
        for rank, (item, score) in enumerate(res.items, start=1):
            sink.write(f"{res.user}\t{rank}\t{item}\t{score!r}\n")
