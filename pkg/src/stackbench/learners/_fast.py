"""Numba kernels for the hot paths: CART growth, tree prediction, kd-tree queries.

All kernels are seeded through splitmix64 on explicit (seed, counter) keys, so
results are bit-identical regardless of thread count or call order.  Keep
fastmath off: float reproducibility matters more than the last 10%.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True, nogil=True, inline="always")
def _splitmix64(z):
    z = (z + np.uint64(0x9E3779B97F4A7C15)) & _MASK
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True, inline="always")
def _rand_below(seed, counter, bound):
    # unbiased enough for feature sampling (bound <= a few thousand)
    return int(_splitmix64(seed ^ _splitmix64(np.uint64(counter))) % np.uint64(bound))


@njit(cache=True, nogil=True)
def grow_tree(X, y, rows, mtry, max_depth, min_leaf, seed):
    """Grow a least-squares/Gini CART over ``rows`` of (X, y).

    For binary y the maximized criterion (sum_child (sum y_c)^2 / n_c) is
    exactly the Gini criterion; for real-valued y it is squared-error
    reduction, so the same grower serves classification and boosting
    residual fits.  Splits are placed at observed values: rows go left when
    x[feature] <= threshold.  Feature subsets are sampled without
    replacement via splitmix64 keyed by (seed, node id), deterministically.

    Returns (feature, threshold, left, right, value, n_nodes); leaves have
    feature == -1 and carry the node mean of y in ``value``.
    """
    n = rows.shape[0]
    p = X.shape[1]
    max_nodes = 4 * (n // max(min_leaf, 1) + 2)
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes, dtype=np.float64)

    order = rows.copy()
    # stack entries: (start, end, depth, node_id)
    stack_start = np.empty(max_nodes, dtype=np.int64)
    stack_end = np.empty(max_nodes, dtype=np.int64)
    stack_depth = np.empty(max_nodes, dtype=np.int64)
    stack_node = np.empty(max_nodes, dtype=np.int64)

    feat_pool = np.empty(p, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    ys = np.empty(n, dtype=np.float64)
    scratch = np.empty(n, dtype=np.int64)

    n_nodes = 1
    top = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    stack_node[0] = 0
    seed64 = np.uint64(seed)

    while top >= 0:
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        node = stack_node[top]
        top -= 1

        m = end - start
        s_total = 0.0
        y_lo = y[order[start]]
        y_hi = y_lo
        for i in range(start, end):
            yi = y[order[i]]
            s_total += yi
            if yi < y_lo:
                y_lo = yi
            elif yi > y_hi:
                y_hi = yi
        value[node] = s_total / m

        if m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        if y_lo == y_hi:
            continue

        # sample mtry features without replacement (partial Fisher-Yates)
        for j in range(p):
            feat_pool[j] = j
        k_try = mtry if mtry < p else p
        for j in range(k_try):
            r = j + _rand_below(seed64, np.uint64(node * p + j), p - j)
            tmp = feat_pool[j]
            feat_pool[j] = feat_pool[r]
            feat_pool[r] = tmp

        parent_score = s_total * s_total / m
        best_gain = 1e-12
        best_feat = -1
        best_thr = 0.0

        for j in range(k_try):
            f = feat_pool[j]
            for i in range(m):
                vals[i] = X[order[start + i], f]
            idx = np.argsort(vals[:m], kind="mergesort")
            for i in range(m):
                ys[i] = y[order[start + idx[i]]]
            s_left = 0.0
            for i in range(m - 1):
                s_left += ys[i]
                nl = i + 1
                if nl < min_leaf:
                    continue
                if m - nl < min_leaf:
                    break
                v_lo = vals[idx[i]]
                v_hi = vals[idx[i + 1]]
                if v_lo == v_hi:
                    continue
                s_right = s_total - s_left
                gain = (
                    s_left * s_left / nl
                    + s_right * s_right / (m - nl)
                    - parent_score
                )
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_thr = v_lo

        if best_feat < 0:
            continue

        # partition [start, end) around the split, preserving relative order
        n_left = 0
        n_right = 0
        for i in range(start, end):
            if X[order[i], best_feat] <= best_thr:
                scratch[n_left] = order[i]
                n_left += 1
        for i in range(start, end):
            if X[order[i], best_feat] > best_thr:
                scratch[n_left + n_right] = order[i]
                n_right += 1
        for i in range(m):
            order[start + i] = scratch[i]

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = left_id
        right[node] = right_id

        top += 1
        stack_start[top] = start
        stack_end[top] = start + n_left
        stack_depth[top] = depth + 1
        stack_node[top] = left_id
        top += 1
        stack_start[top] = start + n_left
        stack_end[top] = end
        stack_depth[top] = depth + 1
        stack_node[top] = right_id

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        n_nodes,
    )


@njit(cache=True, nogil=True)
def predict_tree(feature, threshold, left, right, value, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


@njit(cache=True, nogil=True)
def predict_tree_add(feature, threshold, left, right, value, X, out, scale):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += scale * value[node]


@njit(cache=True, nogil=True)
def kdtree_query_batch(
    split_dim, split_val, node_left, node_right, leaf_start, leaf_end, perm,
    points, queries, k, out_idx, out_dist2,
):
    """k nearest neighbours for each query row, ties broken by lowest row index.

    Exact: matches an exhaustive scan because subtrees are pruned only when
    the splitting plane is strictly farther than the current k-th best
    (distance, index) key.
    """
    n_nodes = split_dim.shape[0]
    stack = np.empty(n_nodes + 1, dtype=np.int64)
    stack_d2 = np.empty(n_nodes + 1, dtype=np.float64)
    best_d2 = np.empty(k, dtype=np.float64)
    best_ix = np.empty(k, dtype=np.int64)
    dim = points.shape[1]

    for q in range(queries.shape[0]):
        count = 0
        top = 0
        stack[0] = 0
        stack_d2[0] = 0.0
        while top >= 0:
            node = stack[top]
            plane_d2 = stack_d2[top]
            top -= 1
            if count == k and plane_d2 > best_d2[k - 1]:
                continue
            while split_dim[node] >= 0:
                delta = queries[q, split_dim[node]] - split_val[node]
                if delta <= 0.0:
                    near = node_left[node]
                    far = node_right[node]
                else:
                    near = node_right[node]
                    far = node_left[node]
                far_d2 = delta * delta
                if count < k or far_d2 <= best_d2[k - 1]:
                    top += 1
                    stack[top] = far
                    stack_d2[top] = far_d2
                node = near
            for i in range(leaf_start[node], leaf_end[node]):
                row = perm[i]
                d2 = 0.0
                for d in range(dim):
                    diff = points[row, d] - queries[q, d]
                    d2 += diff * diff
                if count < k:
                    pos = count
                    count += 1
                elif d2 < best_d2[k - 1] or (
                    d2 == best_d2[k - 1] and row < best_ix[k - 1]
                ):
                    pos = k - 1
                else:
                    continue
                while pos > 0 and (
                    d2 < best_d2[pos - 1]
                    or (d2 == best_d2[pos - 1] and row < best_ix[pos - 1])
                ):
                    best_d2[pos] = best_d2[pos - 1]
                    best_ix[pos] = best_ix[pos - 1]
                    pos -= 1
                best_d2[pos] = d2
                best_ix[pos] = row
        for j in range(k):
            out_idx[q, j] = best_ix[j]
            out_dist2[q, j] = best_d2[j]


@njit(cache=True, nogil=True)
def brute_query_batch(points, queries, k, out_idx, out_dist2):
    """Exhaustive k-NN scan with the same (distance, index) ordering."""
    n = points.shape[0]
    dim = points.shape[1]
    best_d2 = np.empty(k, dtype=np.float64)
    best_ix = np.empty(k, dtype=np.int64)
    for q in range(queries.shape[0]):
        count = 0
        for row in range(n):
            d2 = 0.0
            for d in range(dim):
                diff = points[row, d] - queries[q, d]
                d2 += diff * diff
            if count < k:
                pos = count
                count += 1
            elif d2 < best_d2[k - 1] or (
                d2 == best_d2[k - 1] and row < best_ix[k - 1]
            ):
                pos = k - 1
            else:
                continue
            while pos > 0 and (
                d2 < best_d2[pos - 1]
                or (d2 == best_d2[pos - 1] and row < best_ix[pos - 1])
            ):
                best_d2[pos] = best_d2[pos - 1]
                best_ix[pos] = best_ix[pos - 1]
                pos -= 1
            best_d2[pos] = d2
            best_ix[pos] = row
        for j in range(k):
            out_idx[q, j] = best_ix[j]
            out_dist2[q, j] = best_d2[j]
