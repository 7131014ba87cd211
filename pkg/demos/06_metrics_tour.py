"""Evaluation metrics on crafted cases with known answers.

Run:  python demos/06_metrics_tour.py
"""

import numpy as np

from mlx import metrics
from mlx.model import linear_model

print("== macro vs plain accuracy ==")
preds = np.concatenate([np.zeros(10), np.zeros(1000)])
labels = np.concatenate([np.zeros(10), np.ones(1000)])
print(f"class A 100% (10 ex), class B 0% (1000 ex):")
print(f"  plain accuracy {np.mean(preds == labels):.3f}, macro {metrics.macro_avg_accuracy(preds, labels):.3f}")

print("\n== worst-group accuracy ==")
preds = [0, 0, 1, 0, 1]
labels = [0, 0, 0, 0, 1]
groups = [0, 0, 0, 1, 1]
print("per group:", metrics.per_group_accuracy(preds, labels, groups))
print("worst:", metrics.worst_group_accuracy(preds, labels, groups))

print("\n== noise-sensitivity score ==")
def rcs_formula(acc_core, acc_spur):
    a_bar = (acc_core + acc_spur) / 2
    return 100 * (acc_core - acc_spur) / (2 * min(a_bar, 1 - a_bar))

for pair in ((0.5, 0.5), (1.0, 0.5), (0.9, 0.6)):
    print(f"  acc under masked noise {pair[0]}, under complement noise {pair[1]} -> {rcs_formula(*pair):.0f}")

print("\n== model-level score for a mask-immune classifier ==")
params = linear_model(np.array([[8.0, -8.0], [0.0, 0.0], [0.0, 0.0]]))
rng = np.random.default_rng(4)
x = rng.normal(size=(400, 3))
y = (x[:, 0] < 0).astype(int)
m = np.tile([0.0, 1.0, 1.0], (400, 1))
print("model reads only the unmasked coordinate; score:",
      round(metrics.rcs(params, x, y, m, sigma=1.5, rng=np.random.default_rng(5)), 1))

print("\n== boundary flip fraction ==")
vertical = linear_model(np.array([[1.0, -1.0], [0.0, 0.0]]))
horizontal = linear_model(np.array([[0.0, 0.0], [1.0, -1.0]]))
for name, p in (("vertical boundary", vertical), ("horizontal boundary", horizontal)):
    grid = metrics.boundary_grid(p, (-1, 1), (-1, 1), 41)
    print(f"  {name}: flip fraction {grid.flip_fraction:.2f}")
