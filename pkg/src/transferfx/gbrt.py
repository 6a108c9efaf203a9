"""Gradient-boosted regression trees with squared-error loss, from scratch.

Stagewise least squares: round m fits a depth-limited binary tree to the
current residuals by exact greedy variance-reduction splits over sorted
feature values, then shrinks its leaf means by the learning rate. The
ensemble predicts base_score + learning_rate * sum of routed leaf values.

Everything is deterministic given (data, config): split ties break toward
the lower feature index and lower threshold, and row subsampling draws from
a generator seeded only by config.seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .errors import ValidationError

ENSEMBLE_FORMAT = "transferfx-ensemble"
ENSEMBLE_VERSION = 1


@dataclass(frozen=True)
class BoostConfig:
    """Learner hyperparameters; learning_rate 0 is the documented degenerate
    case where every prediction equals the training-target mean."""

    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 5
    subsample_rows: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.n_rounds, (int, np.integer)) and self.n_rounds >= 0):
            raise ValidationError(f"n_rounds must be a nonnegative int, got {self.n_rounds!r}")
        if not (0.0 <= self.learning_rate <= 1.0):
            raise ValidationError(f"learning_rate must lie in [0, 1], got {self.learning_rate!r}")
        if not (isinstance(self.max_depth, (int, np.integer)) and self.max_depth >= 0):
            raise ValidationError(f"max_depth must be a nonnegative int, got {self.max_depth!r}")
        if not (isinstance(self.min_samples_leaf, (int, np.integer)) and self.min_samples_leaf >= 1):
            raise ValidationError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf!r}")
        if not (0.0 < self.subsample_rows <= 1.0):
            raise ValidationError(f"subsample_rows must lie in (0, 1], got {self.subsample_rows!r}")
        if not (isinstance(self.seed, (int, np.integer)) and self.seed >= 0):
            raise ValidationError(f"seed must be a nonnegative int, got {self.seed!r}")
        # plain Python scalars so configs serialize directly to JSON
        object.__setattr__(self, "n_rounds", int(self.n_rounds))
        object.__setattr__(self, "learning_rate", float(self.learning_rate))
        object.__setattr__(self, "max_depth", int(self.max_depth))
        object.__setattr__(self, "min_samples_leaf", int(self.min_samples_leaf))
        object.__setattr__(self, "subsample_rows", float(self.subsample_rows))
        object.__setattr__(self, "seed", int(self.seed))

    def with_seed(self, seed: int) -> "BoostConfig":
        return BoostConfig(self.n_rounds, self.learning_rate, self.max_depth,
                           self.min_samples_leaf, self.subsample_rows, int(seed))


class TreeEnsemble:
    """Immutable fitted ensemble over flat node arrays."""

    def __init__(self, base_score, feat, thr, left, right, value, n_nodes,
                 n_features, config, train_mse):
        self.base_score = float(base_score)
        self._feat = feat
        self._thr = thr
        self._left = left
        self._right = right
        self._value = value
        self._n_nodes = n_nodes
        self.n_features = int(n_features)
        self.config = config
        self.train_mse = train_mse
        for a in (feat, thr, left, right, value, n_nodes, train_mse):
            a.flags.writeable = False

    @property
    def n_trees(self) -> int:
        return self._feat.shape[0]

    def predict(self, features) -> np.ndarray:
        X = np.ascontiguousarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValidationError(
                f"feature width mismatch: ensemble was trained on {self.n_features} "
                f"features, got shape {X.shape}"
            )
        out = np.empty(X.shape[0])
        _kernels._predict_batch(X, self.base_score, self.config.learning_rate,
                                self._feat, self._thr, self._left, self._right,
                                self._value, out)
        return out

    # -- serialization ------------------------------------------------------

    def _node_to_json(self, m, node):
        if self._feat[m, node] < 0:
            return {"value": float(self._value[m, node])}
        return {
            "feature": int(self._feat[m, node]),
            "threshold": float(self._thr[m, node]),
            "left": self._node_to_json(m, int(self._left[m, node])),
            "right": self._node_to_json(m, int(self._right[m, node])),
        }

    def to_json(self) -> dict:
        return {
            "format": ENSEMBLE_FORMAT,
            "version": ENSEMBLE_VERSION,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "config": asdict(self.config),
            "train_mse": [float(v) for v in self.train_mse],
            "trees": [self._node_to_json(m, 0) if self._n_nodes[m] > 0 else {"value": 0.0}
                      for m in range(self.n_trees)],
        }

    @staticmethod
    def from_json(doc: dict) -> "TreeEnsemble":
        if doc.get("format") != ENSEMBLE_FORMAT:
            raise ValidationError(f"not an ensemble document: format={doc.get('format')!r}")
        if doc.get("version") != ENSEMBLE_VERSION:
            raise ValidationError(f"unsupported ensemble version {doc.get('version')!r}")
        config = BoostConfig(**doc["config"])
        trees = doc["trees"]

        def count(node):
            if "value" in node and "feature" not in node:
                return 1
            return 1 + count(node["left"]) + count(node["right"])

        max_nodes = max((count(t) for t in trees), default=1)
        n_trees = len(trees)
        feat = np.full((n_trees, max_nodes), -1, np.int32)
        thr = np.zeros((n_trees, max_nodes))
        left = np.full((n_trees, max_nodes), _kernels.NO_CHILD, np.int32)
        right = np.full((n_trees, max_nodes), _kernels.NO_CHILD, np.int32)
        value = np.zeros((n_trees, max_nodes))
        n_nodes = np.zeros(n_trees, np.int32)
        for m, tree in enumerate(trees):
            counter = [0]

            def fill(node):
                nid = counter[0]
                counter[0] += 1
                if "feature" in node:
                    feat[m, nid] = node["feature"]
                    thr[m, nid] = node["threshold"]
                    left[m, nid] = fill(node["left"])
                    right[m, nid] = fill(node["right"])
                else:
                    value[m, nid] = node["value"]
                return nid

            fill(tree)
            n_nodes[m] = counter[0]
        train_mse = np.asarray(doc.get("train_mse", []), dtype=np.float64)
        return TreeEnsemble(doc["base_score"], feat, thr, left, right, value,
                            n_nodes, doc["n_features"], config, train_mse)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def load(path) -> "TreeEnsemble":
        with open(path) as fh:
            return TreeEnsemble.from_json(json.load(fh))


def fit(features, targets, config: BoostConfig = BoostConfig()) -> TreeEnsemble:
    """Fit an ensemble to (N x F features, N targets)."""
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(targets, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"features must be 2-d, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValidationError(
            f"targets must be 1-d with one entry per feature row; "
            f"got {y.shape} targets for {X.shape[0]} rows"
        )
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValidationError("non-finite value in features or targets")
    n, n_feat = X.shape
    if n < 2 * config.min_samples_leaf:
        raise ValidationError(
            f"need at least 2*min_samples_leaf={2 * config.min_samples_leaf} rows, got {n}"
        )
    Xt = np.ascontiguousarray(X.T)
    order0 = np.argsort(Xt, axis=1, kind="stable").astype(np.int32)
    if config.subsample_rows < 1.0:
        n_sub = int(np.floor(config.subsample_rows * n))
        if n_sub < 2 * config.min_samples_leaf:
            raise ValidationError(
                f"subsample_rows={config.subsample_rows} keeps {n_sub} rows, "
                f"fewer than 2*min_samples_leaf={2 * config.min_samples_leaf}"
            )
        rng = np.random.default_rng(config.seed)
        sub_idx = np.empty((config.n_rounds, n_sub), np.int32)
        for m in range(config.n_rounds):
            sub_idx[m] = np.sort(rng.permutation(n)[:n_sub]).astype(np.int32)
        use_subsample = True
    else:
        sub_idx = np.empty((config.n_rounds, 0), np.int32)
        use_subsample = False
    base, feat, thr, left, right, value, n_nodes, mse = _kernels._fit_ensemble(
        Xt, order0, y, config.n_rounds, config.learning_rate, config.max_depth,
        config.min_samples_leaf, sub_idx, use_subsample)
    return TreeEnsemble(base, feat, thr, left, right, value, n_nodes,
                        n_feat, config, mse)
