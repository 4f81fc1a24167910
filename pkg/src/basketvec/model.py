"""Gaussian entity encoders, triple likelihood, KL regularizer, and the ELBO.

Users and items are encoded from their identity (a one-hot row, realized as
a weight-row lookup) through a two-layer tanh network whose output splits
into a mean and a log-variance head. Latent vectors are drawn with the
reparameterization z = mu + sigma * eps, so the training objective

    elbo = log-likelihood of positive/negative triples  -  kl_scale * KL(q || prior)

stays differentiable in every encoder weight. In deterministic mode the
variance head is ignored, z = mu, and the KL term is forced to zero, which
reduces the objective to a plain skip-gram triple likelihood over point
embeddings.

Each softmax factor of the triple probability is replaced by the standard
negative-sampling surrogate: a sigmoid of the factor's logit for observed
triples and its complement for corrupted ones. For latents z_u, z_i, z_j the
three logits are

    a = z_i . (z_j + z_u),   b = z_j . (z_i + z_u),   c = z_u . (z_i + z_j).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampler import TripleBatch

VARIATIONAL = "variational"
DETERMINISTIC = "deterministic"

# E x D matrix of reparameterized latent samples.
LatentMatrix = np.ndarray


@dataclass(frozen=True)
class PriorConfig:
    """Isotropic zero-mean Gaussian prior with standard deviation ``alpha``."""

    alpha: float = 1.0

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"prior alpha must be > 0, got {self.alpha}")


@dataclass
class EncoderNet:
    """Weights of one two-layer encoder.

    ``w1`` is (E, H): row e is the first-layer activation of entity e's
    one-hot input. ``w2`` is (H, 2D): the output concatenates the mean head
    and the log-variance head.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class EncoderParams:
    """Trainable state: one encoder per side plus the operating mode."""

    user_net: EncoderNet
    item_net: EncoderNet
    mode: str = VARIATIONAL

    def __post_init__(self) -> None:
        if self.mode not in (VARIATIONAL, DETERMINISTIC):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def n_users(self) -> int:
        return self.user_net.w1.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_net.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.user_net.w1.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.user_net.w2.shape[1] // 2

    def net(self, side: str) -> EncoderNet:
        if side == "user":
            return self.user_net
        if side == "item":
            return self.item_net
        raise ValueError(f"side must be 'user' or 'item', got {side!r}")


@dataclass(frozen=True)
class GaussianEmbeddings:
    """Per-entity diagonal Gaussian posteriors: sigma^2 = exp(log_var)."""

    mu: np.ndarray
    log_var: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var)


def encode(params: EncoderParams, side: str, indices) -> GaussianEmbeddings:
    """Run the encoder of ``side`` on the given dense entity indices.

    The one-hot matrix product of the first layer is realized as a row
    lookup of ``w1``.
    """
    net = params.net(side)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= net.w1.shape[0]):
        raise IndexError(
            f"{side} index out of range [0, {net.w1.shape[0]}): "
            f"min={idx.min()}, max={idx.max()}"
        )
    hidden = np.tanh(net.w1[idx] + net.b1)
    out = hidden @ net.w2 + net.b2
    d = out.shape[1] // 2
    return GaussianEmbeddings(mu=out[:, :d], log_var=out[:, d:])


def reparameterize(
    g: GaussianEmbeddings, noise: np.ndarray, mode: str = VARIATIONAL
) -> LatentMatrix:
    """z = mu + sigma * eps; in deterministic mode z = mu regardless of eps."""
    if noise.shape != g.mu.shape:
        raise ValueError(f"noise shape {noise.shape} != embedding shape {g.mu.shape}")
    if mode == DETERMINISTIC:
        return g.mu.copy()
    return g.mu + np.exp(0.5 * g.log_var) * noise


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable log(1 / (1 + exp(-x)))."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def triple_logits(z_u, z_i, z_j) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The three pairwise logits of a triple; broadcasts over leading axes."""
    z_u, z_i, z_j = (np.asarray(z, dtype=np.float64) for z in (z_u, z_i, z_j))
    a = np.sum(z_i * (z_j + z_u), axis=-1)
    b = np.sum(z_j * (z_i + z_u), axis=-1)
    c = np.sum(z_u * (z_i + z_j), axis=-1)
    return a, b, c


def triple_log_sigma(z_u, z_i, z_j):
    """Log-probability of a triple being observed and of it being rejected.

    Returns (log_pos, log_neg): the sum over the three factors of
    log sigmoid(logit) and log(1 - sigmoid(logit)) respectively. Total on
    finite inputs; no overflow for large logits.
    """
    a, b, c = triple_logits(z_u, z_i, z_j)
    log_pos = log_sigmoid(a) + log_sigmoid(b) + log_sigmoid(c)
    log_neg = log_sigmoid(-a) + log_sigmoid(-b) + log_sigmoid(-c)
    return log_pos, log_neg


def _check_batch_range(batch: TripleBatch, n_users: int, n_items: int) -> None:
    for arr in (batch.positives, batch.negatives):
        if arr.size == 0:
            continue
        if arr[:, 0].max() >= n_users or arr[:, 0].min() < 0:
            raise IndexError("triple user index out of range")
        if arr[:, 1:].max() >= n_items or arr[:, 1:].min() < 0:
            raise IndexError("triple item index out of range")


def log_likelihood(zu: LatentMatrix, zi: LatentMatrix, batch: TripleBatch) -> float:
    """Triple log-likelihood under negative sampling.

    Positives contribute n+ * log_pos; negatives contribute log_neg. The
    latent matrices must cover every index appearing in the batch.
    """
    _check_batch_range(batch, zu.shape[0], zi.shape[0])
    total = 0.0
    if batch.positives.size:
        lp, _ = triple_log_sigma(
            zu[batch.positives[:, 0]],
            zi[batch.positives[:, 1]],
            zi[batch.positives[:, 2]],
        )
        total += float(np.dot(batch.counts.astype(np.float64), lp))
    if batch.negatives.size:
        _, ln = triple_log_sigma(
            zu[batch.negatives[:, 0]],
            zi[batch.negatives[:, 1]],
            zi[batch.negatives[:, 2]],
        )
        total += float(ln.sum())
    return total


def kl_to_prior(g: GaussianEmbeddings, prior: PriorConfig = PriorConfig()) -> float:
    """Closed-form KL(q || N(0, alpha^2 I)) summed over entities and dims.

    Per dimension: ln(alpha/sigma) + (sigma^2 + mu^2) / (2 alpha^2) - 1/2,
    which is zero exactly when mu = 0 and sigma = alpha.
    """
    a2 = prior.alpha**2
    var = np.exp(g.log_var)
    per_dim = (
        np.log(prior.alpha) - 0.5 * g.log_var + (var + g.mu**2) / (2.0 * a2) - 0.5
    )
    return float(per_dim.sum())


def batch_entities(batch: TripleBatch) -> tuple[np.ndarray, np.ndarray]:
    """Sorted unique user and item indices appearing anywhere in the batch."""
    users = [batch.positives[:, 0], batch.negatives[:, 0]]
    items = [
        batch.positives[:, 1],
        batch.positives[:, 2],
        batch.negatives[:, 1],
        batch.negatives[:, 2],
    ]
    return (
        np.unique(np.concatenate(users)),
        np.unique(np.concatenate(items)),
    )


def _localize(batch: TripleBatch, users: np.ndarray, items: np.ndarray) -> TripleBatch:
    """Remap a batch's global indices to positions in the sorted entity lists."""

    def remap(arr: np.ndarray) -> np.ndarray:
        out = np.empty_like(arr)
        out[:, 0] = np.searchsorted(users, arr[:, 0])
        out[:, 1] = np.searchsorted(items, arr[:, 1])
        out[:, 2] = np.searchsorted(items, arr[:, 2])
        return out

    return TripleBatch(
        positives=remap(batch.positives),
        counts=batch.counts,
        negatives=remap(batch.negatives),
        neg_ratio=batch.neg_ratio,
    )


def elbo(
    params: EncoderParams,
    batch: TripleBatch,
    noise: tuple[np.ndarray, np.ndarray],
    prior: PriorConfig = PriorConfig(),
    kl_scale: float = 1.0,
) -> tuple[float, float, float]:
    """Evidence lower bound over one batch: (elbo, recon, kl).

    ``noise`` is a pair of standard-normal arrays, one row per batch user and
    per batch item in the order returned by ``batch_entities`` (one shared
    draw per entity per batch). ``kl_scale`` apportions the dataset-level KL
    to this batch; deterministic mode forces kl = 0.
    """
    if not 0.0 <= kl_scale <= 1.0:
        raise ValueError(f"kl_scale must be in [0, 1], got {kl_scale}")
    _check_batch_range(batch, params.n_users, params.n_items)

    users, items = batch_entities(batch)
    g_u = encode(params, "user", users)
    g_i = encode(params, "item", items)
    noise_u, noise_i = noise
    z_u = reparameterize(g_u, noise_u, params.mode)
    z_i = reparameterize(g_i, noise_i, params.mode)

    recon = log_likelihood(z_u, z_i, _localize(batch, users, items))
    if params.mode == DETERMINISTIC:
        kl = 0.0
    else:
        kl = kl_scale * (kl_to_prior(g_u, prior) + kl_to_prior(g_i, prior))
    return recon - kl, recon, kl
