"""Box propagation vs. PGD vs. random noise on one masked example.

The three estimates of the worst masked perturbation order as
  noise average <= PGD point <= certified upper bound,
which is the whole reason the certified route can train against a
guarantee while the others train against estimates.

Run:  python demos/02_interval_bounds_and_attacks.py
"""

import numpy as np

from mlx import autodiff as ad
from mlx.intervals import input_box, propagate, worst_case_logits
from mlx.model import MlpSpec, init_params, logits
from mlx.perturb import pgd_attack

rng = np.random.default_rng(7)
params = init_params(MlpSpec(6, (16, 16), 3), 1)
x = rng.normal(size=(1, 6))
y = [2]
mask = np.array([[1.0, 1.0, 0.0, 1.0, 0.0, 1.0]])  # 4 of 6 coords irrelevant
kappa = 0.4

def ce(z):
    return ad.cross_entropy(ad.tensor(np.atleast_2d(z)), y).item()

clean = ce(logits(params, x))
print(f"clean loss                 {clean:.4f}")

draws = [ce(logits(params, x + np.clip(rng.normal(0, kappa / 3, x.shape), -kappa, kappa) * mask))
         for _ in range(200)]
print(f"masked-noise average       {np.mean(draws):.4f}")

delta = pgd_attack(params, x, y, mask, kappa=kappa, steps=7)
print(f"PGD point ({7} steps)        {ce(logits(params, x + delta)):.4f}")

box = input_box(x, mask, kappa)
bounds = propagate(params, box)
print(f"certified worst case       {ce(worst_case_logits(bounds, y)):.4f}")

print("\nlogit bounds vs. 10k sampled points (soundness check):")
pts = box.lower + rng.random((10000, 1, 6)) * (box.upper - box.lower)
sampled = np.array([logits(params, p) for p in pts])[:, 0, :]
print("lower bound <= min sampled:", np.all(bounds.lower[0] <= sampled.min(axis=0) + 1e-12))
print("upper bound >= max sampled:", np.all(bounds.upper[0] >= sampled.max(axis=0) - 1e-12))
