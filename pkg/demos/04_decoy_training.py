"""Shortcut learning on decoy images, end to end.

Each 3x28x28 image carries the digit on one half and a label-colored
decoy on the other; training decoys always match the label, test decoys
never do. A model that reads the color aces training and collapses at
test; mask-guided robust training forces it onto the digit.

This demo runs a small fast subset (3k train, 4 epochs). The acceptance
suite runs the full desk-scale version (10k train).

Run:  python demos/04_decoy_training.py            (~4 min)
"""

import numpy as np

from mlx import data, metrics, model, train
from mlx.perturb import PerturbConfig

paths = data.ensure_digit_corpus("demos/out/digits", seed=0)
train_images, train_labels = data.load_idx(paths["train_images"], paths["train_labels"])
test_images, test_labels = data.load_idx(paths["test_images"], paths["test_labels"])
splits = data.build_decoy_mnist(
    train_images, train_labels, test_images, test_labels, seed=0, n_train=3000, n_val=500, n_test=1000
)
print(f"decoy dataset: {len(splits.train)} train / {len(splits.val)} val / {len(splits.test)} test")

spec = model.MlpSpec(3 * 28 * 28, (512, 512), 10)
pgd = PerturbConfig(method="pgd", kappa=1.0, steps=7, alpha=1.0)

for name, cfg in [
    ("erm", train.TrainingConfig(method="erm", epochs=4, seed=0)),
    ("pgd-ex", train.TrainingConfig(method="pgd-ex", perturb=pgd, clamp=(0, 1), epochs=4, seed=0)),
]:
    res = train.train(splits, cfg, spec=spec)
    preds_tr = model.predict(res.params, splits.train.x)
    preds_te = model.predict(res.params, splits.test.x)
    report = metrics.build_report(res.params, splits.test, rng=np.random.default_rng(0))
    print(
        f"{name:8s} train acc {np.mean(preds_tr == splits.train.y):.3f}   "
        f"test avg {report.avg_acc:.3f}   test worst-group {report.wg_acc:.3f}   "
        f"noise-sensitivity {report.rcs if report.rcs is not None else float('nan'):.1f}"
    )
print("\nthe ERM row is the shortcut: perfect training accuracy, chance-or-worse test")
