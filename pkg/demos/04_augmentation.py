"""
Gated augmentation of a 3-D volume
==================================

Each of the five transforms fires independently with its own probability,
always in the same order. The seed fixes both the gates and the transform
randomness.
"""

import numpy as np

from strategy_search import augmentation as aug

rng = np.random.default_rng(0)
vol = np.clip(0.5 + 0.2 * rng.standard_normal((16, 16, 16)), 0, 1)

policy = aug.AugmentationPolicy.from_mapping({"smooth": 0.9, "gaussian_noise": 0.2, "contrast": 0.5})
for seed in range(4):
    out, applied = aug.apply_policy(vol, policy, seed)
    fired = [n for n, a in zip(aug.TRANSFORM_NAMES, applied) if a]
    print(f"seed {seed}: fired={fired} std {vol.std():.3f} -> {out.std():.3f}")

# empirical firing rates track the probabilities
counts = np.zeros(5)
for seed in range(2000):
    counts += aug.apply_policy(vol[:2, :2, :2], policy, seed)[1]
print("rates:", dict(zip(aug.TRANSFORM_NAMES, np.round(counts / 2000, 3).tolist())))
