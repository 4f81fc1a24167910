"""Verify the hand-derived gradients against central finite differences.

Builds a toy encoder pair, draws a small triple batch, and compares the
analytic gradient of every parameter with (f(x+h) - f(x-h)) / 2h. Prints
one row per parameter array with its worst relative error.

Run:  python3 demos/gradient_check.py
"""

import numpy as np

from basketvec import (
    PriorConfig,
    TrainConfig,
    TripleBatch,
    batch_entities,
    elbo,
    gradients,
    init_params,
)
from basketvec.trainer import _net_arrays


def clone(params):
    import copy

    p = copy.deepcopy(params)
    return p


def main() -> None:
    rng = np.random.default_rng(7)
    n_users, n_items, d = 4, 6, 3
    cfg = TrainConfig(epochs=1, latent_dim=d, hidden_dim=4)
    params = init_params(n_users, n_items, cfg, rng)
    for net in (params.user_net, params.item_net):
        for arr in _net_arrays(net):
            arr += 0.1 * rng.standard_normal(arr.shape)

    batch = TripleBatch(
        positives=np.array([[0, 1, 4], [1, 2, 3], [3, 0, 5]]),
        counts=np.array([2, 1, 1]),
        negatives=np.array([[2, 1, 1], [0, 3, 5], [1, 0, 2]]),
        neg_ratio=1,
    )
    users, items = batch_entities(batch)
    noise = (
        rng.standard_normal((users.size, d)),
        rng.standard_normal((items.size, d)),
    )
    prior = PriorConfig(alpha=1.0)
    kl_scale = 0.5
    grads = gradients(params, batch, noise, prior, kl_scale)

    h = 1e-5
    print(f"{'array':<14} {'entries':>7} {'worst rel err':>14}")
    overall = 0.0
    for side in ("user_net", "item_net"):
        for name in ("w1", "b1", "w2", "b2"):
            g_arr = getattr(getattr(grads, side), name)
            worst = 0.0
            for flat in range(g_arr.size):
                idx = np.unravel_index(flat, g_arr.shape)
                vals = []
                for sign in (+1.0, -1.0):
                    p = clone(params)
                    getattr(getattr(p, side), name)[idx] += sign * h
                    v, _, _ = elbo(p, batch, noise, prior, kl_scale)
                    vals.append(v)
                numeric = -(vals[0] - vals[1]) / (2 * h)
                denom = max(abs(numeric), abs(g_arr[idx]), 1e-8)
                worst = max(worst, abs(g_arr[idx] - numeric) / denom)
            overall = max(overall, worst)
            print(f"{side}.{name:<5} {g_arr.size:>7} {worst:>14.3e}")
    print(f"\noverall worst relative error: {overall:.3e} "
          f"({'OK' if overall < 1e-4 else 'MISMATCH'})")


if __name__ == "__main__":
    main()
