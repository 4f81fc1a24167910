"""Variational vs deterministic embeddings under a fixed triple budget.

Both modes train on the same frozen set of sampled triples with identical
hyperparameters; only the latent treatment differs. With few triples and
noisy baskets the point model slowly memorizes one-off co-occurrences while
the variance-regularized model keeps ranking by repetition, so it leads at
the smallest budget; give both plenty of triples and the point model
catches up and passes it.

This is a scaled-down version of the gating small-sample check (fewer
epochs and seeds so it finishes in a couple of minutes).

Run:  python3 demos/sample_size_comparison.py [--budgets 5000 20000 50000]
"""

import argparse

from basketvec import (
    SynthConfig,
    TrainConfig,
    evaluate,
    generate,
    point_embeddings,
    reindex,
    temporal_split,
    train,
)


def ndcg_for(split, maps, mode, budget, epochs, seed):
    cfg = TrainConfig(
        epochs=epochs,
        seed=seed,
        mode=mode,
        latent_dim=16,
        learning_rate=1e-2,
        batch_size=8192,
        resample_each_epoch=False,  # one frozen triple corpus = the budget
    )
    params, _ = train(split, cfg, budget, id_maps=maps)
    zu, zi = point_embeddings(params)
    return evaluate(zu, zi, split.test, k=10, id_maps=maps).ndcg_mean


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--budgets", type=int, nargs="+", default=[5000, 20000, 50000])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    synth = SynthConfig(
        n_users=120,
        n_items=120,
        n_clusters=4,
        orders_per_user=25,
        items_per_order=5,
        in_cluster_prob=0.6,
        seed=1234,
        user_pool_size=8,
    )
    corpus = generate(synth)
    split = temporal_split(corpus, 0.8)
    maps = reindex(corpus)
    print(f"corpus: {len(split.train.records)} train interactions, "
          f"noisy baskets (40% uniform draws)\n")

    print(f"{'budget':>8} {'variational':>12} {'deterministic':>14}")
    for budget in args.budgets:
        epochs = max(60, min(400, 2_000_000 // budget))
        var = ndcg_for(split, maps, "variational", budget, epochs, args.seed)
        det = ndcg_for(split, maps, "deterministic", budget, epochs, args.seed)
        marker = "  <- variational ahead" if var >= det else ""
        print(f"{budget:>8} {var:>12.3f} {det:>14.3f}{marker}")


if __name__ == "__main__":
    main()
