"""Conditional inference tree, simplified: permutation-tested Pearson splits.

Each node measures |Pearson correlation| between every feature and the
labels, estimates per-feature p-values from one shared set of label
permutations, Bonferroni-adjusts across features, and stops when nothing
clears alpha.  The winning feature is cut where the standardized two-sample
mean difference sqrt(nl*nr)/n * |mean_l - mean_r| peaks.
"""

from __future__ import annotations

import numpy as np

from ..core import Dataset, SeededRng
from . import _fast
from .base import FittedModel, f64_list, int_list, register_model
from .specs import CiTree

# a node needs min_node rows to be tested; accepted cuts leave each child
# at least min_node // 3 rows (ctree's minsplit/minbucket shape)
_MIN_CHILD_DIV = 3


def permutation_pvalues(X, y, n_permutations, gen):
    """Per-feature permutation p-values of |corr(x_j, y)|.

    One set of label permutations is shared by all features; p =
    (1 + #{permuted |corr| >= observed}) / (n_permutations + 1).  Features
    with zero variance get p = 1 exactly.
    """
    n = X.shape[0]
    xc = X - X.mean(axis=0)
    sx = np.sqrt(np.einsum("ij,ij->j", xc, xc))
    yc = y - y.mean()
    sy = np.sqrt(yc @ yc)
    denom = sx * sy
    safe = np.where(denom > 0.0, denom, 1.0)
    obs = np.where(denom > 0.0, np.abs(xc.T @ yc) / safe, 0.0)

    perms = np.empty((n, n_permutations), dtype=np.float64)
    for b in range(n_permutations):
        perms[:, b] = yc[gen.permutation(n)]
    stats = np.abs(xc.T @ perms) / safe[:, None]
    stats[denom <= 0.0, :] = 0.0
    exceed = (stats >= obs[:, None]).sum(axis=1)
    return (1.0 + exceed) / (n_permutations + 1.0)


def _best_cut(x, y, min_child):
    """Cut maximizing sqrt(nl*nr)/n * |mean_l - mean_r| over observed values."""
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ys = y[order]
    csum = np.cumsum(ys)
    total = csum[-1]
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    mean_l = csum[:-1] / nl
    mean_r = (total - csum[:-1]) / nr
    stat = np.sqrt(nl * nr) / n * np.abs(mean_l - mean_r)
    valid = (xs[:-1] < xs[1:]) & (nl >= min_child) & (nr >= min_child)
    if not valid.any():
        return None
    stat = np.where(valid, stat, -1.0)
    i = int(np.argmax(stat))
    return float(xs[i])


def citree_split(data: Dataset, rows, alpha, n_permutations, rng: SeededRng,
                 min_node: int = 20):
    """Significance-gated split of one node; None when no test clears alpha."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.shape[0] < min_node:
        return None
    X = data.features[rows]
    y = data.labels[rows].astype(np.float64)
    return _split_node(X, y, alpha, n_permutations, rng.gen,
                       max(2, min_node // _MIN_CHILD_DIV))


def _split_node(X, y, alpha, n_permutations, gen, min_child):
    if y.min() == y.max():
        return None
    pvals = permutation_pvalues(X, y, n_permutations, gen)
    adjusted = np.minimum(1.0, pvals * X.shape[1])
    j = int(np.argmin(adjusted))
    if adjusted[j] > alpha:
        return None
    cut = _best_cut(X[:, j], y, min_child)
    if cut is None:
        return None
    return j, cut


@register_model
class CiTreeModel(FittedModel):
    family = "citree"

    def __init__(self, spec, n_features, seed, feature, threshold, left, right, value):
        super().__init__(spec, n_features, seed)
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)

    def _predict(self, X):
        out = np.empty(X.shape[0], dtype=np.float64)
        _fast.predict_tree(
            self.feature, self.threshold, self.left, self.right, self.value, X, out
        )
        return out

    def _params_doc(self):
        return {
            "feature": int_list(self.feature),
            "threshold": f64_list(self.threshold),
            "left": int_list(self.left),
            "right": int_list(self.right),
            "value": f64_list(self.value),
        }

    @classmethod
    def _from_params(cls, spec, n_features, params):
        return cls(
            spec, n_features, 0,
            params["feature"], params["threshold"],
            params["left"], params["right"], params["value"],
        )


def fit_citree(spec: CiTree, data: Dataset, rng: SeededRng) -> CiTreeModel:
    X = data.features
    y = data.labels.astype(np.float64)
    min_child = max(2, spec.min_node // _MIN_CHILD_DIV)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        return len(feature) - 1

    # DFS with explicit stack; node ids follow creation order so each node's
    # permutation stream is reproducible
    counter = [0]
    stack = [(new_node(np.arange(data.n_rows, dtype=np.int64)),
              np.arange(data.n_rows, dtype=np.int64))]
    while stack:
        node, rows = stack.pop()
        if rows.shape[0] < spec.min_node:
            continue
        gen = rng.child("node", counter[0]).gen
        counter[0] += 1
        found = _split_node(X[rows], y[rows], spec.alpha, spec.n_permutations,
                            gen, min_child)
        if found is None:
            continue
        j, cut = found
        mask = X[rows, j] <= cut
        left_rows = rows[mask]
        right_rows = rows[~mask]
        feature[node] = j
        threshold[node] = cut
        l_id = new_node(left_rows)
        r_id = new_node(right_rows)
        left[node] = l_id
        right[node] = r_id
        stack.append((r_id, right_rows))
        stack.append((l_id, left_rows))

    return CiTreeModel(spec, data.n_features, rng.key_hash,
                       feature, threshold, left, right, value)
