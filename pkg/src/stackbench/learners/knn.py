"""k-nearest-neighbor regression with an exact kd-tree backend.

The tree is a median-split axis-aligned partition built deterministically
from the training matrix alone (widest-spread dimension, stable partition),
so rebuilding after persistence reproduces it bit for bit.  Queries return
exactly the brute-force neighbor set: candidate pruning compares against
the current k-th best (distance, row index) key and ties always resolve to
the lowest row index.
"""

from __future__ import annotations

import sys

import numpy as np

from ..core import Dataset, InvalidArgumentError, SeededRng
from . import _fast
from .base import FittedModel, f64_list, register_model
from .specs import Knn

_LEAF_SIZE = 16


class KdTree:
    __slots__ = (
        "points", "split_dim", "split_val", "left", "right",
        "leaf_start", "leaf_end", "perm",
    )

    def __init__(self, points: np.ndarray, leaf_size: int = _LEAF_SIZE):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] == 0:
            raise InvalidArgumentError("KdTree requires a non-empty 2-d point matrix")
        self.points = points
        split_dim, split_val, left, right, leaf_start, leaf_end = [], [], [], [], [], []

        def new_node():
            split_dim.append(-1)
            split_val.append(0.0)
            left.append(-1)
            right.append(-1)
            leaf_start.append(0)
            leaf_end.append(0)
            return len(split_dim) - 1

        perm = np.arange(points.shape[0], dtype=np.int64)

        def build(seg: np.ndarray, offset: int) -> int:
            node = new_node()
            count = seg.shape[0]
            sub = points[seg]
            if count > leaf_size:
                lo = sub.min(axis=0)
                hi = sub.max(axis=0)
                dim = int(np.argmax(hi - lo))
                if hi[dim] > lo[dim]:
                    vals = sub[:, dim]
                    order = np.sort(vals)
                    sv = order[count // 2]
                    if sv == order[-1]:
                        # everything from the median up is the max; step the
                        # plane down so the right side stays non-empty
                        sv = order[np.searchsorted(order, sv) - 1]
                    mask = vals <= sv
                    left_seg = seg[mask]
                    right_seg = seg[~mask]
                    split_dim[node] = dim
                    split_val[node] = float(sv)
                    l_id = build(left_seg, offset)
                    r_id = build(right_seg, offset + left_seg.shape[0])
                    left[node] = l_id
                    right[node] = r_id
                    return node
            # leaf (small, or all points identical on the widest dimension)
            leaf_start[node] = offset
            leaf_end[node] = offset + count
            perm[offset:offset + count] = seg
            return node

        # median splits keep depth near log2(n); heavy duplicate striping can
        # unbalance it, so give the recursion room on big inputs
        if sys.getrecursionlimit() < points.shape[0] + 100:
            sys.setrecursionlimit(min(points.shape[0] + 100, 100_000))
        build(perm.copy(), 0)
        self.split_dim = np.asarray(split_dim, dtype=np.int32)
        self.split_val = np.asarray(split_val, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.leaf_start = np.asarray(leaf_start, dtype=np.int64)
        self.leaf_end = np.asarray(leaf_end, dtype=np.int64)
        self.perm = perm

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def query_batch(self, queries: np.ndarray, k: int):
        queries = np.ascontiguousarray(queries, dtype=np.float64)
        if k < 1 or k > self.n_points:
            raise InvalidArgumentError(
                f"k must be in [1, {self.n_points}], got {k}"
            )
        out_idx = np.empty((queries.shape[0], k), dtype=np.int64)
        out_d2 = np.empty((queries.shape[0], k), dtype=np.float64)
        _fast.kdtree_query_batch(
            self.split_dim, self.split_val, self.left, self.right,
            self.leaf_start, self.leaf_end, self.perm,
            self.points, queries, k, out_idx, out_d2,
        )
        return out_idx, out_d2


def kdtree_query(tree: KdTree, point, k: int):
    """k nearest training rows to one point: [(row, distance)] ascending."""
    point = np.ascontiguousarray(point, dtype=np.float64).reshape(1, -1)
    idx, d2 = tree.query_batch(point, k)
    return [(int(i), float(np.sqrt(d))) for i, d in zip(idx[0], d2[0])]


def brute_query_batch(points, queries, k):
    points = np.ascontiguousarray(points, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    if k < 1 or k > points.shape[0]:
        raise InvalidArgumentError(f"k must be in [1, {points.shape[0]}], got {k}")
    out_idx = np.empty((queries.shape[0], k), dtype=np.int64)
    out_d2 = np.empty((queries.shape[0], k), dtype=np.float64)
    _fast.brute_query_batch(points, queries, k, out_idx, out_d2)
    return out_idx, out_d2


@register_model
class KnnModel(FittedModel):
    family = "knn"

    def __init__(self, spec, n_features, seed, train_x, train_y):
        super().__init__(spec, n_features, seed)
        self.train_x = np.ascontiguousarray(train_x, dtype=np.float64)
        self.train_y = np.ascontiguousarray(train_y, dtype=np.float64)
        self.tree = KdTree(self.train_x) if spec.backend == "kd_tree" else None

    def _predict(self, X):
        k = min(self.spec.k, self.train_x.shape[0])
        if self.tree is not None:
            idx, _ = self.tree.query_batch(X, k)
        else:
            idx, _ = brute_query_batch(self.train_x, X, k)
        return self.train_y[idx].mean(axis=1)

    def _params_doc(self):
        return {
            "train_x": [f64_list(row) for row in self.train_x],
            "train_y": f64_list(self.train_y),
        }

    @classmethod
    def _from_params(cls, spec, n_features, params):
        train_x = np.asarray(params["train_x"], dtype=np.float64).reshape(
            len(params["train_x"]), n_features
        )
        train_y = np.asarray(params["train_y"], dtype=np.float64)
        return cls(spec, n_features, 0, train_x, train_y)


def fit_knn(spec: Knn, data: Dataset, rng: SeededRng) -> KnnModel:
    return KnnModel(
        spec, data.n_features, rng.key_hash,
        data.features, data.labels.astype(np.float64),
    )
