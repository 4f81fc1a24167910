"""Encoder forward pass, reparameterized draws, triple likelihood, KL, ELBO."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from basketvec import (
    DETERMINISTIC,
    VARIATIONAL,
    EncoderNet,
    EncoderParams,
    GaussianEmbeddings,
    PriorConfig,
    TripleBatch,
    batch_entities,
    elbo,
    encode,
    kl_to_prior,
    log_likelihood,
    reparameterize,
    triple_log_sigma,
)

THREE_LOG_HALF = 3 * math.log(0.5)  # -2.0794415416798357
SIX_LOG_HALF = 6 * math.log(0.5)  # -4.1588830833596715


def make_net(n, hidden, dim, rng=None, scale=0.5):
    if rng is None:
        return EncoderNet(
            w1=np.zeros((n, hidden)),
            b1=np.zeros(hidden),
            w2=np.zeros((hidden, 2 * dim)),
            b2=np.zeros(2 * dim),
        )
    return EncoderNet(
        w1=rng.normal(scale=scale, size=(n, hidden)),
        b1=rng.normal(scale=scale, size=hidden),
        w2=rng.normal(scale=scale, size=(hidden, 2 * dim)),
        b2=rng.normal(scale=scale, size=2 * dim),
    )


def make_params(n_users=3, n_items=4, hidden=5, dim=2, rng=None, mode=VARIATIONAL):
    return EncoderParams(
        user_net=make_net(n_users, hidden, dim, rng),
        item_net=make_net(n_items, hidden, dim, rng),
        mode=mode,
    )


def make_batch(positives, counts, negatives, neg_ratio=1):
    return TripleBatch(
        positives=np.asarray(positives, dtype=np.int64).reshape(-1, 3),
        counts=np.asarray(counts, dtype=np.int64),
        negatives=np.asarray(negatives, dtype=np.int64).reshape(-1, 3),
        neg_ratio=neg_ratio,
    )


def ref_log_sigmoid(x):
    """Branching scalar reference, accurate for any finite float."""
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


class TestEncode:
    def test_zero_network_yields_standard_posteriors(self):
        params = make_params()
        g = encode(params, "item", [0, 1, 2, 3])
        assert np.all(g.mu == 0.0)
        assert np.all(g.log_var == 0.0)
        assert np.all(g.sigma == 1.0)

    def test_matches_explicit_one_hot_product(self):
        """Row lookup must equal tanh(onehot @ w1 + b1) @ w2 + b2 exactly."""
        rng = np.random.default_rng(7)
        params = make_params(n_users=6, hidden=4, dim=3, rng=rng)
        idx = np.array([4, 0, 4, 2])
        net = params.user_net
        onehot = np.zeros((len(idx), 6))
        onehot[np.arange(len(idx)), idx] = 1.0
        out = np.tanh(onehot @ net.w1 + net.b1) @ net.w2 + net.b2
        g = encode(params, "user", idx)
        assert np.array_equal(g.mu, out[:, :3])
        assert np.array_equal(g.log_var, out[:, 3:])

    def test_out_of_range_index_raises(self):
        params = make_params(n_items=4)
        with pytest.raises(IndexError):
            encode(params, "item", [0, 4])
        with pytest.raises(IndexError):
            encode(params, "item", [-1])

    def test_does_not_mutate_weights(self):
        rng = np.random.default_rng(8)
        params = make_params(rng=rng)
        before = [a.copy() for a in (params.user_net.w1, params.user_net.w2)]
        encode(params, "user", [0, 1, 2])
        assert np.array_equal(params.user_net.w1, before[0])
        assert np.array_equal(params.user_net.w2, before[1])

    def test_unknown_side_rejected(self):
        with pytest.raises(ValueError):
            encode(make_params(), "basket", [0])


class TestReparameterize:
    def test_zero_noise_returns_mean(self):
        rng = np.random.default_rng(3)
        g = GaussianEmbeddings(
            mu=rng.normal(size=(5, 2)), log_var=rng.normal(size=(5, 2))
        )
        assert np.array_equal(reparameterize(g, np.zeros((5, 2))), g.mu)

    def test_hand_case(self):
        """mu=1, sigma=2 (log_var=ln 4), eps=0.5 gives z=2."""
        g = GaussianEmbeddings(
            mu=np.ones((1, 1)), log_var=np.full((1, 1), math.log(4.0))
        )
        z = reparameterize(g, np.full((1, 1), 0.5))
        assert z[0, 0] == pytest.approx(2.0, abs=1e-14)

    def test_deterministic_mode_ignores_noise(self):
        rng = np.random.default_rng(4)
        g = GaussianEmbeddings(
            mu=rng.normal(size=(4, 3)), log_var=rng.normal(size=(4, 3))
        )
        z = reparameterize(g, np.full((4, 3), 1e6), mode=DETERMINISTIC)
        assert np.array_equal(z, g.mu)
        z[0, 0] = -99.0
        assert g.mu[0, 0] != -99.0  # caller got a copy

    def test_sample_moments(self):
        """200k draws reproduce mean mu and variance exp(log_var)."""
        n = 200_000
        g = GaussianEmbeddings(
            mu=np.full((n, 1), 0.7), log_var=np.full((n, 1), -0.4)
        )
        rng = np.random.default_rng(5)
        z = reparameterize(g, rng.standard_normal((n, 1)))
        assert z.mean() == pytest.approx(0.7, abs=0.01)
        assert z.var() == pytest.approx(math.exp(-0.4), rel=0.03)

    def test_shape_mismatch_raises(self):
        g = GaussianEmbeddings(mu=np.zeros((2, 2)), log_var=np.zeros((2, 2)))
        with pytest.raises(ValueError):
            reparameterize(g, np.zeros((2, 3)))


class TestTripleLogSigma:
    def test_zero_latents_give_three_log_half(self):
        z = np.zeros((4, 3))
        log_pos, log_neg = triple_log_sigma(z, z, z)
        assert log_pos == pytest.approx(np.full(4, THREE_LOG_HALF), abs=1e-15)
        assert log_neg == pytest.approx(np.full(4, THREE_LOG_HALF), abs=1e-15)

    def test_matches_scalar_reference(self):
        """Vectorized factors agree with a per-element python loop to 1e-12."""
        rng = np.random.default_rng(11)
        z_u = rng.normal(size=(30, 4))
        z_i = rng.normal(size=(30, 4))
        z_j = rng.normal(size=(30, 4))
        log_pos, log_neg = triple_log_sigma(z_u, z_i, z_j)
        for r in range(30):
            a = float(z_i[r] @ (z_j[r] + z_u[r]))
            b = float(z_j[r] @ (z_i[r] + z_u[r]))
            c = float(z_u[r] @ (z_i[r] + z_j[r]))
            want_pos = math.fsum(ref_log_sigmoid(x) for x in (a, b, c))
            want_neg = math.fsum(ref_log_sigmoid(-x) for x in (a, b, c))
            assert log_pos[r] == pytest.approx(want_pos, rel=1e-12, abs=1e-12)
            assert log_neg[r] == pytest.approx(want_neg, rel=1e-12, abs=1e-12)

    def test_item_swap_symmetry(self):
        rng = np.random.default_rng(12)
        z_u, z_i, z_j = (rng.normal(size=(20, 3)) for _ in range(3))
        fwd = triple_log_sigma(z_u, z_i, z_j)
        rev = triple_log_sigma(z_u, z_j, z_i)
        assert np.array_equal(fwd[0], rev[0])
        assert np.array_equal(fwd[1], rev[1])

    def test_extreme_logits_stay_finite(self):
        """Logits near +-1800 must not overflow either branch."""
        z_u = np.array([[30.0, 0.0]])
        z_i = np.array([[30.0, 0.0]])
        z_j = np.array([[-30.0, 0.0]])
        log_pos, log_neg = triple_log_sigma(z_u, z_i, z_j)
        assert np.isfinite(log_pos).all()
        assert np.isfinite(log_neg).all()

    def test_large_logit_accuracy_against_longdouble(self):
        rng = np.random.default_rng(13)
        scale = 5.0  # logits land around +-50
        z_u, z_i, z_j = (scale * rng.normal(size=(50, 2)) for _ in range(3))
        log_pos, log_neg = triple_log_sigma(z_u, z_i, z_j)
        zl = [np.asarray(z, dtype=np.longdouble) for z in (z_u, z_i, z_j)]
        a = np.sum(zl[1] * (zl[2] + zl[0]), axis=-1)
        b = np.sum(zl[2] * (zl[1] + zl[0]), axis=-1)
        c = np.sum(zl[0] * (zl[1] + zl[2]), axis=-1)
        ref_pos = sum(-np.logaddexp(0.0, -x) for x in (a, b, c))
        ref_neg = sum(-np.logaddexp(0.0, x) for x in (a, b, c))
        np.testing.assert_allclose(log_pos, ref_pos.astype(np.float64), rtol=1e-9)
        np.testing.assert_allclose(log_neg, ref_neg.astype(np.float64), rtol=1e-9)


class TestLogLikelihood:
    def test_zero_embeddings_hand_value(self):
        """One positive and one negative at z=0: total is 6 ln(1/2)."""
        zu, zi = np.zeros((1, 3)), np.zeros((2, 3))
        batch = make_batch([(0, 0, 1)], [1], [(0, 1, 1)])
        assert log_likelihood(zu, zi, batch) == pytest.approx(
            SIX_LOG_HALF, abs=1e-12
        )

    def test_multiplicity_weights_positive_term(self):
        rng = np.random.default_rng(21)
        zu, zi = rng.normal(size=(2, 3)), rng.normal(size=(3, 3))
        one = log_likelihood(zu, zi, make_batch([(1, 0, 2)], [1], np.empty((0, 3))))
        three = log_likelihood(zu, zi, make_batch([(1, 0, 2)], [3], np.empty((0, 3))))
        assert three == pytest.approx(3 * one, rel=1e-12)

    def test_matches_per_triple_loop(self):
        """Vectorized total equals a python fsum over every triple row."""
        rng = np.random.default_rng(22)
        zu, zi = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
        pos = np.stack(
            [
                rng.integers(0, 4, size=20),
                rng.integers(0, 6, size=20),
                rng.integers(0, 6, size=20),
            ],
            axis=1,
        )
        counts = rng.integers(1, 5, size=20)
        neg = np.stack(
            [
                rng.integers(0, 4, size=50),
                rng.integers(0, 6, size=50),
                rng.integers(0, 6, size=50),
            ],
            axis=1,
        )
        batch = make_batch(pos, counts, neg)

        def factors(u, i, j):
            a = float(zi[i] @ (zi[j] + zu[u]))
            b = float(zi[j] @ (zi[i] + zu[u]))
            c = float(zu[u] @ (zi[i] + zi[j]))
            return a, b, c

        terms = []
        for (u, i, j), n in zip(pos, counts):
            terms.append(
                n * math.fsum(ref_log_sigmoid(x) for x in factors(u, i, j))
            )
        for u, i, j in neg:
            terms.append(
                math.fsum(ref_log_sigmoid(-x) for x in factors(u, i, j))
            )
        assert log_likelihood(zu, zi, batch) == pytest.approx(
            math.fsum(terms), rel=1e-12
        )

    def test_empty_batch_is_zero(self):
        batch = make_batch(np.empty((0, 3)), [], np.empty((0, 3)))
        assert log_likelihood(np.zeros((1, 2)), np.zeros((1, 2)), batch) == 0.0

    def test_out_of_range_indices_raise(self):
        zu, zi = np.zeros((2, 2)), np.zeros((3, 2))
        with pytest.raises(IndexError):
            log_likelihood(zu, zi, make_batch([(2, 0, 1)], [1], np.empty((0, 3))))
        with pytest.raises(IndexError):
            log_likelihood(zu, zi, make_batch([(0, 0, 3)], [1], np.empty((0, 3))))


class TestKlToPrior:
    def test_posterior_equal_to_prior_is_zero(self):
        g = GaussianEmbeddings(mu=np.zeros((5, 4)), log_var=np.zeros((5, 4)))
        assert kl_to_prior(g) == 0.0

    def test_unit_mean_is_half_per_dim(self):
        """mu=1, sigma=1 against the standard prior costs exactly 1/2 a dim."""
        g = GaussianEmbeddings(mu=np.ones((3, 4)), log_var=np.zeros((3, 4)))
        assert kl_to_prior(g) == pytest.approx(0.5 * 12, abs=1e-12)

    def test_zero_when_sigma_matches_wide_prior(self):
        alpha = 2.5
        g = GaussianEmbeddings(
            mu=np.zeros((2, 3)), log_var=np.full((2, 3), 2 * math.log(alpha))
        )
        assert kl_to_prior(g, PriorConfig(alpha=alpha)) == pytest.approx(0.0, abs=1e-12)

    def test_nonnegative_everywhere(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            g = GaussianEmbeddings(
                mu=rng.normal(scale=2, size=(3, 2)),
                log_var=rng.normal(scale=2, size=(3, 2)),
            )
            alpha = float(rng.uniform(0.2, 3.0))
            assert kl_to_prior(g, PriorConfig(alpha=alpha)) >= -1e-12

    def test_monte_carlo_agreement(self):
        """Closed form within 2% of a 200k-sample E[log q - log p] estimate."""
        mu, log_var, alpha = 0.8, 0.3, 1.3
        g = GaussianEmbeddings(mu=np.array([[mu]]), log_var=np.array([[log_var]]))
        want = kl_to_prior(g, PriorConfig(alpha=alpha))
        rng = np.random.default_rng(32)
        sigma = math.exp(0.5 * log_var)
        z = mu + sigma * rng.standard_normal(200_000)
        est = np.mean(norm.logpdf(z, mu, sigma) - norm.logpdf(z, 0.0, alpha))
        assert want == pytest.approx(est, rel=0.02)

    def test_prior_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            PriorConfig(alpha=0.0)
        with pytest.raises(ValueError):
            PriorConfig(alpha=-1.0)


class TestElbo:
    def test_batch_entities_sorted_unique(self):
        batch = make_batch(
            [(2, 5, 5), (0, 1, 3)], [1, 2], [(2, 3, 5), (0, 1, 1)]
        )
        users, items = batch_entities(batch)
        assert users.tolist() == [0, 2]
        assert items.tolist() == [1, 3, 5]

    def test_zero_network_hand_value(self):
        """All-zero nets put z=0, so recon counts rows times 3 ln(1/2)."""
        params = make_params(n_users=3, n_items=4)
        batch = make_batch(
            [(0, 0, 1), (1, 2, 3)], [2, 1], [(0, 1, 1), (2, 0, 3)]
        )
        users, items = batch_entities(batch)
        noise = (np.zeros((users.size, 2)), np.zeros((items.size, 2)))
        value, recon, kl = elbo(params, batch, noise)
        assert kl == 0.0  # mu=0, sigma=1 matches the prior exactly
        assert recon == pytest.approx(5 * THREE_LOG_HALF, abs=1e-12)
        assert value == recon

    def test_kl_scale_zero_reduces_to_likelihood(self):
        rng = np.random.default_rng(41)
        params = make_params(rng=rng)
        batch = make_batch([(0, 0, 1)], [1], [(1, 2, 3)])
        users, items = batch_entities(batch)
        noise = (
            rng.standard_normal((users.size, 2)),
            rng.standard_normal((items.size, 2)),
        )
        value, recon, kl = elbo(params, batch, noise, kl_scale=0.0)
        assert kl == 0.0
        assert value == recon
        full, recon_full, kl_full = elbo(params, batch, noise, kl_scale=1.0)
        assert kl_full > 0.0
        assert full == pytest.approx(recon_full - kl_full)
        assert recon_full == recon

    def test_deterministic_mode_ignores_noise_and_kl(self):
        rng = np.random.default_rng(42)
        params = make_params(rng=rng, mode=DETERMINISTIC)
        batch = make_batch([(0, 1, 2)], [1], [(2, 0, 3)])
        users, items = batch_entities(batch)
        a = elbo(params, batch, (np.zeros((users.size, 2)), np.zeros((items.size, 2))))
        b = elbo(
            params,
            batch,
            (
                np.full((users.size, 2), 7.0),
                np.full((items.size, 2), -7.0),
            ),
        )
        assert a == b
        assert a[2] == 0.0

    def test_shared_noise_row_per_entity(self):
        """Recon must equal a global-index evaluation with one draw per entity."""
        rng = np.random.default_rng(43)
        params = make_params(n_users=3, n_items=5, rng=rng)
        batch = make_batch(
            [(0, 1, 4), (0, 1, 1), (2, 1, 4)], [1, 3, 2], [(1, 0, 4), (0, 2, 4)]
        )
        users, items = batch_entities(batch)
        noise_u = rng.standard_normal((users.size, 2))
        noise_i = rng.standard_normal((items.size, 2))
        _, recon, _ = elbo(params, batch, (noise_u, noise_i))

        g_u = encode(params, "user", np.arange(3))
        g_i = encode(params, "item", np.arange(5))
        full_noise_u = np.zeros((3, 2))
        full_noise_u[users] = noise_u
        full_noise_i = np.zeros((5, 2))
        full_noise_i[items] = noise_i
        z_u = reparameterize(g_u, full_noise_u)
        z_i = reparameterize(g_i, full_noise_i)
        assert recon == pytest.approx(log_likelihood(z_u, z_i, batch), rel=1e-13)

    def test_kl_scale_validation(self):
        params = make_params()
        batch = make_batch([(0, 0, 1)], [1], [(1, 1, 2)])
        users, items = batch_entities(batch)
        noise = (np.zeros((users.size, 2)), np.zeros((items.size, 2)))
        for bad in (-0.1, 1.5):
            with pytest.raises(ValueError):
                elbo(params, batch, noise, kl_scale=bad)

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            make_params(mode="hybrid")
