"""Gradient boosting from scratch
================================

Each taxon's one-step-ahead regression is fitted with a small in-house
gradient-boosted tree learner: squared-error stagewise fitting, depth-capped
regression trees on exact split scans, shrinkage, and optional row
subsampling. No external ML dependency is involved; predictions are exactly
reproducible from the seed.

This script exercises the learner on two classic shapes -- a step function
(trees nail it) and a noisy quadratic -- and shows the serialization round
trip used by the CLI's model files.
"""

import json

import numpy as np

from transferfx import BoostConfig, fit

rng = np.random.default_rng(42)

print("=" * 72)
print("1. A step function is one split away")
print("=" * 72)

X = rng.uniform(-1.0, 1.0, size=(400, 3))
y_step = np.where(X[:, 0] > 0.3, 2.0, -1.0)

model = fit(X, y_step, BoostConfig(n_rounds=40, learning_rate=0.3, max_depth=2,
                                   min_samples_leaf=2, seed=0))
pred = model.predict(X)
print(f"final training MSE: {np.mean((pred - y_step) ** 2):.2e}")
print(f"per-round MSE is non-increasing: "
      f"{bool(np.all(np.diff(model.train_mse) <= 1e-12))}")
print(f"rounds to MSE < 1e-3: "
      f"{int(np.argmax(model.train_mse < 1e-3)) + 1} of {model.n_trees}")

print()
print("=" * 72)
print("2. A noisy quadratic: depth and rounds trade off")
print("=" * 72)

X = rng.uniform(-2.0, 2.0, size=(600, 4))
y_true = X[:, 0] ** 2 + 0.5 * X[:, 1]
y = y_true + rng.normal(scale=0.3, size=600)
X_hold = rng.uniform(-2.0, 2.0, size=(300, 4))
y_hold = X_hold[:, 0] ** 2 + 0.5 * X_hold[:, 1]

print(f"{'rounds':>7} {'depth':>6} {'train MSE':>10} {'holdout MSE':>12}")
for n_rounds in (10, 50, 200):
    for depth in (1, 3):
        m = fit(X, y, BoostConfig(n_rounds=n_rounds, max_depth=depth, seed=1))
        tr = float(np.mean((m.predict(X) - y) ** 2))
        ho = float(np.mean((m.predict(X_hold) - y_hold) ** 2))
        print(f"{n_rounds:>7} {depth:>6} {tr:>10.4f} {ho:>12.4f}")
print("(stumps keep improving with rounds; depth 3 starts to overfit past "
      "50 rounds -- the training noise floor is 0.09)")

print()
print("=" * 72)
print("3. Row subsampling is seeded and reproducible")
print("=" * 72)

cfg = BoostConfig(n_rounds=30, max_depth=3, subsample_rows=0.6, seed=7)
a, b = fit(X, y, cfg), fit(X, y, cfg)
c = fit(X, y, BoostConfig(n_rounds=30, max_depth=3, subsample_rows=0.6, seed=8))
print(f"same seed   -> identical predictions: "
      f"{bool(np.array_equal(a.predict(X_hold), b.predict(X_hold)))}")
print(f"other seed  -> different predictions: "
      f"{not np.array_equal(a.predict(X_hold), c.predict(X_hold))}")

print()
print("=" * 72)
print("4. Serialization round trip")
print("=" * 72)

doc = a.to_json()
restored = type(a).from_json(json.loads(json.dumps(doc)))
same = np.array_equal(a.predict(X_hold), restored.predict(X_hold))
print(f"JSON document: {len(json.dumps(doc))} bytes, {a.n_trees} trees")
print(f"restored ensemble predicts bitwise-identically: {bool(same)}")
