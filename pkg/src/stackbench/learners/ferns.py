"""Random ferns: fixed-depth random binary tests with smoothed bin posteriors.

Each fern is D (feature, threshold) tests; a point's bin code sets bit
D-1-d to 1 when test d fires (the first test is the high bit).  Bin
posteriors get add-one smoothing and ferns combine semi-naively: summed
log-posteriors, normalized across the two classes.
"""

from __future__ import annotations

import numpy as np

from ..core import Dataset, InvalidArgumentError, SeededRng
from .base import FittedModel, f64_list, int_list, register_model
from .specs import RandomFerns


def fern_bin_index(point, fern_tests) -> int:
    """Bin code of one point under a fern's (feature index, threshold) list."""
    point = np.asarray(point, dtype=np.float64)
    depth = len(fern_tests)
    code = 0
    for d, (feat, thr) in enumerate(fern_tests):
        if not 0 <= feat < point.shape[0]:
            raise InvalidArgumentError(
                f"fern test {d} references feature {feat}, point has {point.shape[0]}"
            )
        if point[feat] > thr:
            code |= 1 << (depth - 1 - d)
    return code


def _bin_codes(X, features, thresholds) -> np.ndarray:
    depth = features.shape[0]
    codes = np.zeros(X.shape[0], dtype=np.int64)
    for d in range(depth):
        codes |= (X[:, features[d]] > thresholds[d]).astype(np.int64) << (depth - 1 - d)
    return codes


@register_model
class RandomFernsModel(FittedModel):
    family = "random_ferns"

    def __init__(self, spec, n_features, seed, features, thresholds, log_pos, log_neg):
        super().__init__(spec, n_features, seed)
        self.features = np.asarray(features, dtype=np.int64)      # (n_ferns, depth)
        self.thresholds = np.asarray(thresholds, dtype=np.float64)
        self.log_pos = np.asarray(log_pos, dtype=np.float64)      # (n_ferns, 2^depth)
        self.log_neg = np.asarray(log_neg, dtype=np.float64)

    def _predict(self, X):
        s_pos = np.zeros(X.shape[0], dtype=np.float64)
        s_neg = np.zeros(X.shape[0], dtype=np.float64)
        for f in range(self.features.shape[0]):
            codes = _bin_codes(X, self.features[f], self.thresholds[f])
            s_pos += self.log_pos[f, codes]
            s_neg += self.log_neg[f, codes]
        hi = np.maximum(s_pos, s_neg)
        e_pos = np.exp(s_pos - hi)
        e_neg = np.exp(s_neg - hi)
        return e_pos / (e_pos + e_neg)

    def _params_doc(self):
        return {
            "features": [int_list(row) for row in self.features],
            "thresholds": [f64_list(row) for row in self.thresholds],
            "log_pos": [f64_list(row) for row in self.log_pos],
            "log_neg": [f64_list(row) for row in self.log_neg],
        }

    @classmethod
    def _from_params(cls, spec, n_features, params):
        return cls(
            spec, n_features, 0,
            params["features"], params["thresholds"],
            params["log_pos"], params["log_neg"],
        )


def fit_random_ferns(spec: RandomFerns, data: Dataset, rng: SeededRng) -> RandomFernsModel:
    X = data.features
    y = data.labels
    p = data.n_features
    depth = spec.fern_depth
    n_bins = 1 << depth
    col_min = X.min(axis=0)
    col_max = X.max(axis=0)

    features = np.empty((spec.n_ferns, depth), dtype=np.int64)
    thresholds = np.empty((spec.n_ferns, depth), dtype=np.float64)
    log_pos = np.empty((spec.n_ferns, n_bins), dtype=np.float64)
    log_neg = np.empty((spec.n_ferns, n_bins), dtype=np.float64)

    for f in range(spec.n_ferns):
        gen = rng.child("fern", f).gen
        feats = gen.integers(0, p, size=depth)
        thrs = col_min[feats] + gen.random(depth) * (col_max[feats] - col_min[feats])
        codes = _bin_codes(X, feats, thrs)
        pos = np.bincount(codes[y == 1], minlength=n_bins).astype(np.float64)
        neg = np.bincount(codes[y == 0], minlength=n_bins).astype(np.float64)
        posterior = (pos + 1.0) / (pos + neg + 2.0)
        features[f] = feats
        thresholds[f] = thrs
        log_pos[f] = np.log(posterior)
        log_neg[f] = np.log1p(-posterior)

    return RandomFernsModel(spec, p, rng.key_hash, features, thresholds, log_pos, log_neg)
