"""
Random forest regression written against numpy.

Trees are grown CART-style on bootstrap resamples, choosing the squared-error
optimal threshold among a random subset of features at every split. Each
fitted tree is kept as flat parallel node arrays so a whole forest can be
evaluated level by level with vectorized indexing.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .features import FEATURE_NAMES, CellVocabulary, FeatureVector, encode

LEAF = -1


@dataclass(frozen=True)
class ForestParams:
    num_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 5
    features_per_split: int | None = None  # None -> ceil(sqrt(d))
    bootstrap: bool = True

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")


@dataclass
class Tree:
    feature: np.ndarray    # int, LEAF for leaves
    threshold: np.ndarray  # go left when x[feature] <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # mean label of the node's training samples
    count: np.ndarray      # training samples (with bootstrap multiplicity)

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for k in range(len(self.feature)):
            if self.feature[k] != LEAF:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f != LEAF
            if not inner.any():
                return self.value[node]
            go_left = X[rows, np.where(inner, f, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "count": self.count.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
            np.asarray(d["count"], dtype=np.int64),
        )


def _best_split(X, y, idx, features, min_leaf):
    n = len(idx)
    ys = y[idx]
    total = ys.sum()
    base = total * total / n
    best_score, best_f, best_thr = base + 1e-12 * max(1.0, abs(base)), None, None
    n_left = np.arange(1, n)
    size_ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not size_ok.any():
        return None, None
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        left_sum = np.cumsum(ys[order])[:-1]
        valid = size_ok & (xs[1:] > xs[:-1])
        if not valid.any():
            continue
        score = left_sum**2 / n_left + (total - left_sum) ** 2 / (n - n_left)
        score[~valid] = -np.inf
        k = int(np.argmax(score))
        if score[k] > best_score:
            thr = 0.5 * (xs[k] + xs[k + 1])
            if not xs[k] <= thr < xs[k + 1]:
                thr = xs[k]
            best_score, best_f, best_thr = score[k], int(f), float(thr)
    return best_f, best_thr


def grow_tree(X, y, sample_idx, params: ForestParams, n_features_split: int, rng) -> Tree:
    d = X.shape[1]
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[idx].mean()))
        count.append(len(idx))
        return len(feature) - 1

    stack = [(new_node(sample_idx), sample_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= params.max_depth or len(idx) < 2 * params.min_leaf:
            continue
        ys = y[idx]
        if ys.max() == ys.min():
            continue
        feats = rng.permutation(d)[:n_features_split]
        f, thr = _best_split(X, y, idx, feats, params.min_leaf)
        if f is None:
            continue
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # push right first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(
        np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float), np.asarray(count, dtype=np.int64),
    )


class ForestModel:
    """Bagged regression trees; the prediction is the mean tree output clamped at 0."""

    def __init__(self, trees, params: ForestParams, n_features: int,
                 vocab: CellVocabulary | None = None, seed=None, feature_names=None):
        if not trees:
            raise ValueError("a forest needs at least one tree")
        self.trees = list(trees)
        self.params = params
        self.n_features = n_features
        self.vocab = vocab or CellVocabulary()
        self.training_seed = seed
        self.feature_names = tuple(feature_names) if feature_names else None
        self.oob_prediction = None
        self._pack()

    @property
    def num_trees(self) -> int:
        return len(self.trees)

    @property
    def features_per_split(self) -> int:
        return self.params.features_per_split or math.ceil(math.sqrt(self.n_features))

    def _pack(self):
        width = max(len(t.feature) for t in self.trees)
        T = len(self.trees)
        self._feature = np.full((T, width), LEAF, dtype=np.int64)
        self._threshold = np.zeros((T, width))
        self._left = np.zeros((T, width), dtype=np.int64)
        self._right = np.zeros((T, width), dtype=np.int64)
        self._value = np.zeros((T, width))
        for k, t in enumerate(self.trees):
            m = len(t.feature)
            self._feature[k, :m] = t.feature
            self._threshold[k, :m] = t.threshold
            self._left[k, :m] = t.left
            self._right[k, :m] = t.right
            self._value[k, :m] = t.value
        self._depth = max(t.depth for t in self.trees)

    def tree_outputs(self, X) -> np.ndarray:
        """(num_trees, n) matrix of per-tree predictions."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        T = len(self.trees)
        rows = np.arange(T)[:, None]
        cols = np.arange(len(X))[None, :]
        node = np.zeros((T, len(X)), dtype=np.int64)
        for _ in range(self._depth):
            f = self._feature[rows, node]
            inner = f >= 0
            go_left = X[cols, np.maximum(f, 0)] <= self._threshold[rows, node]
            nxt = np.where(go_left, self._left[rows, node], self._right[rows, node])
            node = np.where(inner, nxt, node)
        return self._value[rows, node]

    def predict(self, X) -> np.ndarray:
        return np.maximum(self.tree_outputs(X).mean(axis=0), 0.0)

    def predict_one(self, x) -> float:
        """Scalar prediction for one encoded row or :class:`FeatureVector`."""
        if isinstance(x, FeatureVector):
            x = encode([x], self.vocab)[0]
        return float(self.predict(x)[0])

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "n_features": self.n_features,
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "cell_vocab": list(self.vocab.ids),
            "training_seed": self.training_seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls(
            [Tree.from_dict(t) for t in d["trees"]],
            ForestParams(**d["params"]),
            int(d["n_features"]),
            CellVocabulary(d.get("cell_vocab", ())),
            d.get("training_seed"),
            d.get("feature_names"),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ForestModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def train_forest(X, y, params: ForestParams | None = None, seed: int = 0,
                 vocab: CellVocabulary | None = None, feature_names=None) -> ForestModel:
    """Fit a forest on an encoded feature matrix.

    The same ``seed`` and data always give a bit-identical model. Out-of-bag
    predictions (NaN where a row was in every bag) are left on
    ``model.oob_prediction``.
    """
    params = params or ForestParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"feature matrix {X.shape} does not match {len(y)} labels")
    if len(y) == 0:
        raise ValueError("empty training set")
    if len(y) < 10:
        raise ValueError(f"need at least 10 samples, got {len(y)}")
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise ValueError("labels must be finite and non-negative")
    n, d = X.shape
    m = params.features_per_split or math.ceil(math.sqrt(d))
    m = max(1, min(m, d))

    streams = np.random.SeedSequence(seed).spawn(params.num_trees)
    trees = []
    oob_sum = np.zeros(n)
    oob_n = np.zeros(n, dtype=np.int64)
    for stream in streams:
        rng = np.random.default_rng(stream)
        if params.bootstrap:
            idx = np.sort(rng.integers(0, n, size=n))
        else:
            idx = np.arange(n)
        tree = grow_tree(X, y, idx, params, m, rng)
        trees.append(tree)
        if params.bootstrap:
            out = np.ones(n, dtype=bool)
            out[idx] = False
            if out.any():
                oob_sum[out] += tree.predict(X[out])
                oob_n[out] += 1

    model = ForestModel(trees, params, d, vocab, seed, feature_names)
    with np.errstate(invalid="ignore", divide="ignore"):
        model.oob_prediction = np.maximum(np.where(oob_n > 0, oob_sum / oob_n, np.nan), 0.0)
    return model


def train_rate_forest(features, rates, params: ForestParams | None = None, seed: int = 0):
    """Convenience wrapper taking :class:`FeatureVector` rows."""
    features = list(features)
    if not features:
        raise ValueError("empty training set")
    vocab = CellVocabulary(f.cell_id for f in features)
    return train_forest(encode(features, vocab), rates, params, seed, vocab, FEATURE_NAMES)


def predict(model: ForestModel, features) -> float:
    """Predicted data rate (MBit/s) for one feature vector."""
    return model.predict_one(features)
