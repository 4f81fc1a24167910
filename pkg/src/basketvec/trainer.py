"""Mini-batch training of the triple ELBO with hand-derived gradients.

Gradients of the negative ELBO are backpropagated by hand through the
log-sigmoid triple factors, the reparameterization (dz/dmu = 1,
dz/dlog_var = sigma * eps / 2), the tanh hidden layer, and the closed-form
KL term. Updates use RMSprop. Everything is deterministic given the config
seed: epoch e draws from a generator seeded with SeedSequence([seed, e]).
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, replace

import numpy as np

from .corpus import IdMaps, SplitDataset
from .errors import TrainingError
from .model import (
    DETERMINISTIC,
    VARIATIONAL,
    EncoderNet,
    EncoderParams,
    PriorConfig,
    batch_entities,
    log_sigmoid,
    triple_logits,
    _localize,
)
from .sampler import Triple, TripleBatch, sample_negatives, sample_triples

KL_PER_BATCH = "per-batch"
KL_OFF = "off"


@dataclass(frozen=True)
class TrainConfig:
    """Knobs of one training run.

    ``hidden_dim=None`` means twice the latent size. ``resample_each_epoch``
    toggles between fresh triples per epoch and one fixed triple corpus
    drawn up front (the fixed-sample-budget experiment setting).
    """

    epochs: int
    batch_size: int = 512
    learning_rate: float = 1e-3
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8
    seed: int = 0
    neg_ratio: int = 5
    kl_scale_mode: str = KL_PER_BATCH
    mode: str = VARIATIONAL
    latent_dim: int = 64
    hidden_dim: int | None = None
    prior_alpha: float = 1.0
    resample_each_epoch: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 < self.rms_decay < 1:
            raise ValueError(f"rms_decay must be in (0, 1), got {self.rms_decay}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.rms_epsilon <= 0:
            raise ValueError(f"rms_epsilon must be > 0, got {self.rms_epsilon}")
        if self.neg_ratio < 1:
            raise ValueError(f"neg_ratio must be >= 1, got {self.neg_ratio}")
        if self.kl_scale_mode not in (KL_PER_BATCH, KL_OFF):
            raise ValueError(f"unknown kl_scale_mode {self.kl_scale_mode!r}")
        if self.mode not in (VARIATIONAL, DETERMINISTIC):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.hidden_dim is not None and self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if not self.prior_alpha > 0:
            raise ValueError(f"prior_alpha must be > 0, got {self.prior_alpha}")

    @property
    def effective_hidden_dim(self) -> int:
        return self.hidden_dim if self.hidden_dim is not None else 2 * self.latent_dim

    @property
    def prior(self) -> PriorConfig:
        return PriorConfig(alpha=self.prior_alpha)


@dataclass
class OptimizerState:
    """RMSprop squared-gradient accumulators, one array per parameter."""

    user_net: EncoderNet
    item_net: EncoderNet


@dataclass
class GradientSet:
    """Gradients of the loss (negative ELBO), shaped like EncoderParams."""

    user_net: EncoderNet
    item_net: EncoderNet


@dataclass(frozen=True)
class EpochStats:
    """Objective terms of one epoch, averaged per positive triple draw."""

    elbo: float
    recon: float
    kl: float


@dataclass(frozen=True)
class TrainReport:
    trajectory: tuple[EpochStats, ...]
    epoch_seconds: tuple[float, ...]
    params_digest: str


def _net_arrays(net: EncoderNet) -> tuple[np.ndarray, ...]:
    return (net.w1, net.b1, net.w2, net.b2)


def _zeros_like_net(net: EncoderNet) -> EncoderNet:
    return EncoderNet(
        w1=np.zeros_like(net.w1),
        b1=np.zeros_like(net.b1),
        w2=np.zeros_like(net.w2),
        b2=np.zeros_like(net.b2),
    )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(
    n_users: int, n_items: int, cfg: TrainConfig, rng: np.random.Generator
) -> EncoderParams:
    """Glorot-uniform weights, zero biases, variance-head output bias -1.

    The -1 bias puts the initial posterior variance at e^-1, below the unit
    prior, so the KL term starts small.
    """
    d, h = cfg.latent_dim, cfg.effective_hidden_dim

    def make_net(n_entities: int) -> EncoderNet:
        b2 = np.zeros(2 * d)
        b2[d:] = -1.0
        return EncoderNet(
            w1=_glorot(rng, n_entities, h),
            b1=np.zeros(h),
            w2=_glorot(rng, h, 2 * d),
            b2=b2,
        )

    return EncoderParams(
        user_net=make_net(n_users), item_net=make_net(n_items), mode=cfg.mode
    )


def init_optimizer(params: EncoderParams) -> OptimizerState:
    return OptimizerState(
        user_net=_zeros_like_net(params.user_net),
        item_net=_zeros_like_net(params.item_net),
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(log_sigmoid(x))


def _latent_grads(
    z_u: np.ndarray, z_i: np.ndarray, local: TripleBatch
) -> tuple[np.ndarray, np.ndarray, float]:
    """Gradient of -recon w.r.t. each latent row, plus the recon value.

    For a triple with logits (a, b, c) the positive contribution to recon is
    n+ * [logsig(a)+logsig(b)+logsig(c)], the negative one uses -a, -b, -c.
    d logsig(x)/dx = sigmoid(-x); the chain rule through the three logits
    gives each latent's row gradient, scatter-added over the batch.
    """
    gz_u = np.zeros_like(z_u)
    gz_i = np.zeros_like(z_i)
    recon = 0.0

    for triples, weights, positive in (
        (local.positives, local.counts.astype(np.float64), True),
        (local.negatives, None, False),
    ):
        if triples.size == 0:
            continue
        zu = z_u[triples[:, 0]]
        zi = z_i[triples[:, 1]]
        zj = z_i[triples[:, 2]]
        a, b, c = triple_logits(zu, zi, zj)
        if positive:
            # d(-recon)/da = -n+ * sigmoid(-a)
            ga = -weights * _sigmoid(-a)
            gb = -weights * _sigmoid(-b)
            gc = -weights * _sigmoid(-c)
            recon += float(
                np.dot(weights, log_sigmoid(a) + log_sigmoid(b) + log_sigmoid(c))
            )
        else:
            ga = _sigmoid(a)
            gb = _sigmoid(b)
            gc = _sigmoid(c)
            recon += float(
                np.sum(log_sigmoid(-a) + log_sigmoid(-b) + log_sigmoid(-c))
            )
        ga, gb, gc = ga[:, None], gb[:, None], gc[:, None]
        np.add.at(gz_i, triples[:, 1], ga * (zj + zu) + gb * zj + gc * zu)
        np.add.at(gz_i, triples[:, 2], ga * zi + gb * (zi + zu) + gc * zu)
        np.add.at(gz_u, triples[:, 0], ga * zi + gb * zj + gc * (zi + zj))

    return gz_u, gz_i, recon


def _forward_backward(
    params: EncoderParams,
    batch: TripleBatch,
    noise: tuple[np.ndarray, np.ndarray],
    prior: PriorConfig,
    kl_scale: float,
) -> tuple[tuple[float, float, float], GradientSet]:
    """One pass: returns ((elbo, recon, kl), gradients of -elbo)."""
    users, items = batch_entities(batch)
    local = _localize(batch, users, items)
    variational = params.mode == VARIATIONAL
    a2 = prior.alpha**2

    sides = []
    for net, idx, eps in (
        (params.user_net, users, noise[0]),
        (params.item_net, items, noise[1]),
    ):
        hidden = np.tanh(net.w1[idx] + net.b1)
        out = hidden @ net.w2 + net.b2
        d = out.shape[1] // 2
        mu, log_var = out[:, :d], out[:, d:]
        if eps.shape != mu.shape:
            raise ValueError(f"noise shape {eps.shape} != embedding shape {mu.shape}")
        sigma = np.exp(0.5 * log_var)
        z = mu + sigma * eps if variational else mu.copy()
        sides.append((net, idx, eps, hidden, mu, log_var, sigma, z))

    gz_u, gz_i, recon = _latent_grads(sides[0][7], sides[1][7], local)

    kl = 0.0
    nets = []
    for (net, idx, eps, hidden, mu, log_var, sigma, _z), gz, n_entities in (
        (sides[0], gz_u, params.n_users),
        (sides[1], gz_i, params.n_items),
    ):
        g_mu = gz.copy()
        if variational:
            g_lv = gz * (0.5 * sigma * eps)
            if kl_scale > 0.0:
                var = np.exp(log_var)
                kl += kl_scale * float(
                    np.sum(
                        np.log(prior.alpha)
                        - 0.5 * log_var
                        + (var + mu**2) / (2.0 * a2)
                        - 0.5
                    )
                )
                g_mu += kl_scale * mu / a2
                g_lv += kl_scale * (-0.5 + var / (2.0 * a2))
        else:
            g_lv = np.zeros_like(log_var)
        g_out = np.concatenate([g_mu, g_lv], axis=1)
        g_w2 = hidden.T @ g_out
        g_b2 = g_out.sum(axis=0)
        g_hidden = g_out @ net.w2.T
        g_x = g_hidden * (1.0 - hidden**2)
        g_w1 = np.zeros((n_entities, net.w1.shape[1]))
        g_w1[idx] = g_x
        nets.append(EncoderNet(w1=g_w1, b1=g_x.sum(axis=0), w2=g_w2, b2=g_b2))

    values = (recon - kl, recon, kl)
    return values, GradientSet(user_net=nets[0], item_net=nets[1])


def gradients(
    params: EncoderParams,
    batch: TripleBatch,
    noise: tuple[np.ndarray, np.ndarray],
    prior: PriorConfig = PriorConfig(),
    kl_scale: float = 1.0,
) -> GradientSet:
    """Exact gradients of the negative ELBO for every encoder parameter."""
    if not 0.0 <= kl_scale <= 1.0:
        raise ValueError(f"kl_scale must be in [0, 1], got {kl_scale}")
    _, grads = _forward_backward(params, batch, noise, prior, kl_scale)
    return grads


def rmsprop_step(
    params: EncoderParams,
    grads: GradientSet,
    state: OptimizerState,
    cfg: TrainConfig,
) -> tuple[EncoderParams, OptimizerState]:
    """acc <- decay*acc + (1-decay)*g^2; theta <- theta - lr*g/sqrt(acc+eps).

    Pure: inputs are left untouched. Aborts on non-finite gradients rather
    than letting NaN propagate into the parameters.
    """
    new_params_nets = []
    new_state_nets = []
    for p_net, g_net, s_net in (
        (params.user_net, grads.user_net, state.user_net),
        (params.item_net, grads.item_net, state.item_net),
    ):
        arrays = []
        accs = []
        for theta, g, acc in zip(
            _net_arrays(p_net), _net_arrays(g_net), _net_arrays(s_net)
        ):
            if not np.isfinite(g).all():
                raise TrainingError("non-finite gradient; aborting before update")
            new_acc = cfg.rms_decay * acc + (1.0 - cfg.rms_decay) * g**2
            arrays.append(
                theta - cfg.learning_rate * g / np.sqrt(new_acc + cfg.rms_epsilon)
            )
            accs.append(new_acc)
        new_params_nets.append(EncoderNet(*arrays))
        new_state_nets.append(EncoderNet(*accs))
    new_params = replace(params, user_net=new_params_nets[0], item_net=new_params_nets[1])
    return new_params, OptimizerState(user_net=new_state_nets[0], item_net=new_state_nets[1])


def params_digest(params: EncoderParams) -> str:
    """SHA-256 over the raw float64 bytes of all arrays in a fixed order."""
    h = hashlib.sha256()
    h.update(params.mode.encode())
    for net in (params.user_net, params.item_net):
        for arr in _net_arrays(net):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()


def _union_id_maps(data: SplitDataset) -> IdMaps:
    users = sorted({r.user_id for r in data.train.records} | {r.user_id for r in data.test.records})
    items = sorted({r.item_id for r in data.train.records} | {r.item_id for r in data.test.records})
    return IdMaps.from_universes(users, items)


def train(
    data: SplitDataset,
    cfg: TrainConfig,
    sample_count: int,
    id_maps: IdMaps | None = None,
    epoch_callback=None,
) -> tuple[EncoderParams, TrainReport]:
    """Train encoders on the train split; fully reproducible from cfg.seed.

    Per epoch: draw ``sample_count`` triples (or reuse the epoch-0 corpus
    when resampling is off), shuffle, then per batch corrupt negatives, draw
    one noise row per entity, and take an RMSprop step on the hand-derived
    gradients. The trajectory records per-positive-draw means so epochs of
    different sizes stay comparable. ``epoch_callback(epoch, params, stats)``
    runs after each epoch (checkpoint hook).
    """
    if sample_count < 1:
        raise ValueError(f"sample_count must be >= 1, got {sample_count}")
    if id_maps is None:
        id_maps = _union_id_maps(data)

    init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
    params = init_params(id_maps.n_users, id_maps.n_items, cfg, init_rng)
    state = init_optimizer(params)
    prior = cfg.prior
    total_entities = id_maps.n_users + id_maps.n_items
    d = cfg.latent_dim

    fixed_triples: list[Triple] | None = None
    if not cfg.resample_each_epoch:
        # 2**63 cannot collide with an epoch index in the per-epoch streams.
        corpus_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2**63]))
        fixed_triples = sample_triples(data.train, sample_count, corpus_rng, id_maps)

    trajectory: list[EpochStats] = []
    seconds: list[float] = []
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch]))
        if fixed_triples is not None:
            triples = fixed_triples
        else:
            triples = sample_triples(data.train, sample_count, rng, id_maps)
        order = rng.permutation(len(triples))

        elbo_sum = recon_sum = kl_sum = 0.0
        draws = 0
        for start in range(0, len(order), cfg.batch_size):
            chunk = [triples[k] for k in order[start : start + cfg.batch_size]]
            batch = sample_negatives(
                chunk, cfg.neg_ratio, id_maps.n_users, id_maps.n_items, rng
            )
            users, items = batch_entities(batch)
            if cfg.mode == VARIATIONAL and cfg.kl_scale_mode == KL_PER_BATCH:
                kl_scale = (len(users) + len(items)) / total_entities
            else:
                kl_scale = 0.0
            noise = (
                rng.standard_normal((len(users), d)),
                rng.standard_normal((len(items), d)),
            )
            values, grads = _forward_backward(params, batch, noise, prior, kl_scale)
            if not all(np.isfinite(v) for v in values):
                raise TrainingError(
                    f"non-finite objective at epoch {epoch}: "
                    f"elbo={values[0]}, recon={values[1]}, kl={values[2]}"
                )
            params, state = rmsprop_step(params, grads, state, cfg)
            elbo_sum += values[0]
            recon_sum += values[1]
            kl_sum += values[2]
            draws += batch.n_positive_draws

        stats = EpochStats(
            elbo=elbo_sum / draws, recon=recon_sum / draws, kl=kl_sum / draws
        )
        trajectory.append(stats)
        seconds.append(time.perf_counter() - started)
        if epoch_callback is not None:
            epoch_callback(epoch, params, stats)

    if not all(
        np.isfinite(arr).all()
        for net in (params.user_net, params.item_net)
        for arr in _net_arrays(net)
    ):
        raise TrainingError("training produced non-finite parameters")

    report = TrainReport(
        trajectory=tuple(trajectory),
        epoch_seconds=tuple(seconds),
        params_digest=params_digest(params),
    )
    return params, report
