"""Library-level walkthrough: synthesize, filter, split, train, evaluate.

The same flow the CLI wires together, spelled out as function calls so each
intermediate object can be poked at. Runs in a few seconds:

    python3 demos/end_to_end.py
"""

import numpy as np

from scaa.data import SynthConfig, filter_multilevel, gen_synthetic, split_train_test
from scaa.metrics import evaluate_all, format_report_table
from scaa.model import build_histories, new_model
from scaa.seeding import MODEL_INIT, rng_stream
from scaa.training import TrainConfig, train


def main():
    cfg = SynthConfig(users=80, items=200, exposure_per_user=20, seed=1)
    raw, features = gen_synthetic(cfg)
    print(f"generated {len(raw)} interaction records, {raw.n_users} users, "
          f"{raw.n_items} items")

    ds = filter_multilevel(raw, "and")
    print(f"multi-level filter kept {ds.n_users} users with both likes and follows")

    # the generator's feature matrix is keyed by the raw table; re-key it to
    # the filtered table's item order before handing it to the model
    row_of = {ext: i for i, ext in enumerate(raw.item_ids)}
    aligned = np.array([features[row_of[ext]] for ext in ds.item_ids])

    train_ds, test_ds = split_train_test(ds, 0.8)
    print(f"chronological split: {len(train_ds)} train / {len(test_ds)} test records")

    model = new_model(
        ds.item_ids,
        d=cfg.d_latent,
        seed_rng=rng_stream(0, MODEL_INIT),
        item_features=aligned,
    )
    curve = train(model, train_ds, TrainConfig(epochs=5, seed=0))
    print("mean loss per epoch:", " ".join(f"{v:.4f}" for v in curve))

    histories = build_histories(train_ds.records, ds.n_items)
    report = evaluate_all(model, test_ds, histories, k=10)
    print()
    print(format_report_table([("SCAA", report)], k=10))
    print(f"\nscored {report.n_scored} test exposures for "
          f"{report.n_ranked_users} rankable users")


if __name__ == "__main__":
    main()
