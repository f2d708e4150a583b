"""Bagged CART forests (Gini splits) and the single decision tree they reduce to."""

from __future__ import annotations

import math

import numpy as np

from ..core import Dataset, SeededRng, stable_hash
from . import _fast
from .base import FittedModel, f64_list, int_list, register_model, subsample_indices
from .specs import RandomForest


class TreeParams:
    """Flat-array CART: feature < 0 marks a leaf carrying the node mean."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)

    def predict_into(self, X, out):
        _fast.predict_tree(
            self.feature, self.threshold, self.left, self.right, self.value, X, out
        )

    def to_doc(self) -> dict:
        return {
            "feature": int_list(self.feature),
            "threshold": f64_list(self.threshold),
            "left": int_list(self.left),
            "right": int_list(self.right),
            "value": f64_list(self.value),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "TreeParams":
        return cls(doc["feature"], doc["threshold"], doc["left"], doc["right"], doc["value"])


def grow_cart(X, y, rows, mtry, max_depth, min_leaf, seed) -> TreeParams:
    feature, threshold, left, right, value, n_nodes = _fast.grow_tree(
        X,
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(rows, dtype=np.int64),
        mtry,
        -1 if max_depth is None else int(max_depth),
        int(min_leaf),
        np.uint64(seed % 2**64),
    )
    return TreeParams(feature, threshold, left, right, value)


def _resolve_mtry(mtry, p):
    return p if mtry is None else min(mtry, p)


def _forest_mtry(mtry, p):
    return int(math.ceil(math.sqrt(p))) if mtry is None else min(mtry, p)


@register_model
class RandomForestModel(FittedModel):
    family = "random_forest"

    def __init__(self, spec, n_features, seed, trees):
        super().__init__(spec, n_features, seed)
        self.trees = trees

    def _predict(self, X):
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees:
            _fast.predict_tree_add(
                tree.feature, tree.threshold, tree.left, tree.right, tree.value,
                X, acc, 1.0,
            )
        return acc / len(self.trees)

    def _params_doc(self):
        return {"trees": [t.to_doc() for t in self.trees]}

    @classmethod
    def _from_params(cls, spec, n_features, params):
        trees = [TreeParams.from_doc(d) for d in params["trees"]]
        return cls(spec, n_features, 0, trees)


def fit_random_forest(spec: RandomForest, data: Dataset, rng: SeededRng) -> RandomForestModel:
    X = data.features
    y = data.labels.astype(np.float64)
    mtry = _forest_mtry(spec.mtry, data.n_features)
    trees = []
    for t in range(spec.n_trees):
        tree_rng = rng.child("tree", t)
        rows = subsample_indices(data.n_rows, spec.bootstrap_fraction, tree_rng.gen)
        grow_seed = stable_hash(tree_rng.key_hash, "grow")
        trees.append(grow_cart(X, y, rows, mtry, spec.max_depth, spec.min_leaf, grow_seed))
    return RandomForestModel(spec, data.n_features, rng.key_hash, trees)


class DecisionTreeModel(FittedModel):
    """A lone CART on the full sample; exists mainly to pin down what a
    1-tree, fraction-1, mtry=p forest must reduce to."""

    family = "decision_tree"

    def __init__(self, spec, n_features, seed, tree):
        super().__init__(spec, n_features, seed)
        self.tree = tree

    def _predict(self, X):
        out = np.empty(X.shape[0], dtype=np.float64)
        self.tree.predict_into(X, out)
        return out


def fit_decision_tree(
    data: Dataset,
    rng: SeededRng,
    mtry=None,
    max_depth=None,
    min_leaf: int = 5,
) -> DecisionTreeModel:
    mtry = _resolve_mtry(mtry, data.n_features)
    rows = np.arange(data.n_rows, dtype=np.int64)
    grow_seed = stable_hash(rng.child("tree", 0).key_hash, "grow")
    tree = grow_cart(
        data.features, data.labels.astype(np.float64), rows,
        mtry, max_depth, min_leaf, grow_seed,
    )
    spec = RandomForest(
        n_trees=1, mtry=mtry, bootstrap_fraction=1.0,
        max_depth=max_depth, min_leaf=min_leaf,
    )
    return DecisionTreeModel(spec, data.n_features, rng.key_hash, tree)
