"""Gradient boosting on logistic loss with tree or linear base learners.

F_0 is the log-odds of the training base rate; every round least-squares
fits the base learner to residuals y - sigmoid(F) and adds shrinkage times
the fit.  Because each fit is an L2 projection of the negative gradient,
any shrinkage below ~8 strictly decreases training loss, which the recorded
``loss_path`` makes checkable round by round.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import Dataset, FitError, SeededRng, stable_hash
from . import _fast
from .base import FittedModel, f64_list, register_model
from .forest import TreeParams, grow_cart
from .specs import Boost, LinearBase, TreeBase

_BOOST_MIN_LEAF = 5


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(labels, margins) -> float:
    """Mean logistic loss from raw margins F (numerically stable)."""
    signed = np.where(labels > 0.5, -margins, margins)
    return float(np.mean(np.maximum(signed, 0.0) + np.log1p(np.exp(-np.abs(signed)))))


@register_model
class BoostModel(FittedModel):
    family = "boost"

    def __init__(self, spec, n_features, seed, f0, trees, betas, loss_path):
        super().__init__(spec, n_features, seed)
        self.f0 = float(f0)
        self.trees = trees          # tree base: list of TreeParams
        self.betas = betas          # linear base: list of (p+1,) coefficient rows
        self.loss_path = np.asarray(loss_path, dtype=np.float64)

    def _margins(self, X):
        F = np.full(X.shape[0], self.f0, dtype=np.float64)
        nu = self.spec.shrinkage
        if self.trees is not None:
            for tree in self.trees:
                _fast.predict_tree_add(
                    tree.feature, tree.threshold, tree.left, tree.right,
                    tree.value, X, F, nu,
                )
        else:
            design = np.column_stack([np.ones(X.shape[0]), X])
            for beta in self.betas:
                F += nu * (design @ beta)
        return F

    def _predict(self, X):
        return _sigmoid(self._margins(X))

    def _params_doc(self):
        doc = {"f0": self.f0, "loss_path": f64_list(self.loss_path)}
        if self.trees is not None:
            doc["trees"] = [t.to_doc() for t in self.trees]
        else:
            doc["betas"] = [f64_list(b) for b in self.betas]
        return doc

    @classmethod
    def _from_params(cls, spec, n_features, params):
        trees = betas = None
        if "trees" in params:
            trees = [TreeParams.from_doc(d) for d in params["trees"]]
        else:
            betas = [np.asarray(b, dtype=np.float64) for b in params["betas"]]
        return cls(spec, n_features, 0, params["f0"], trees, betas,
                   params.get("loss_path", []))


def fit_boost(spec: Boost, data: Dataset, rng: SeededRng) -> BoostModel:
    y = data.labels.astype(np.float64)
    if y.min() == y.max():
        raise FitError("[boost] training data holds a single class")
    X = data.features
    n, p = X.shape
    base_rate = float(y.mean())
    f0 = math.log(base_rate / (1.0 - base_rate))
    F = np.full(n, f0, dtype=np.float64)
    loss_path = [log_loss(y, F)]
    rows = np.arange(n, dtype=np.int64)
    tree_base = isinstance(spec.base, TreeBase)
    trees = [] if tree_base else None
    betas = None if tree_base else []
    design = None if tree_base else np.column_stack([np.ones(n), X])

    for m in range(spec.n_rounds):
        residual = y - _sigmoid(F)
        if tree_base:
            seed = stable_hash(rng.child("round", m).key_hash, "grow")
            tree = grow_cart(X, residual, rows, p, spec.base.max_depth,
                             _BOOST_MIN_LEAF, seed)
            trees.append(tree)
            step = np.empty(n, dtype=np.float64)
            tree.predict_into(X, step)
        else:
            beta, _, _, _ = np.linalg.lstsq(design, residual, rcond=None)
            betas.append(beta)
            step = design @ beta
        F += spec.shrinkage * step
        loss_path.append(log_loss(y, F))

    return BoostModel(spec, p, rng.key_hash, f0, trees, betas, loss_path)
