"""Multivariate adaptive regression splines.

Forward pass: greedily add mirrored hinge pairs parent*max(0, x-t) and
parent*max(0, t-x), knots restricted to at most 32 observed values per
feature.  Candidate scoring uses the span identity
span{c+, c-} = span{parent*x, parent*|x-t|} so each (parent, feature) costs
one orthogonalization of parent*x plus a batched one over all knots.
Backward pass: drop terms by generalized cross-validation with effective
parameters m + penalty*(m-1)/2.  Predictions are clipped to [0, 1].
"""

from __future__ import annotations

import numpy as np

from ..core import Dataset, SeededRng
from .base import FittedModel, register_model
from .specs import Mars

_MAX_KNOTS = 32
_EPS = 1e-10


def hinge(x, knot, sign):
    if sign > 0:
        return np.maximum(0.0, x - knot)
    return np.maximum(0.0, knot - x)


def _term_column(X, term):
    col = np.ones(X.shape[0], dtype=np.float64)
    for feat, knot, sign in term:
        col *= hinge(X[:, feat], knot, sign)
    return col


def _knot_candidates(col):
    vals = np.unique(col)
    if vals.shape[0] <= _MAX_KNOTS:
        return vals
    idx = np.unique(np.round(np.linspace(0, vals.shape[0] - 1, _MAX_KNOTS)).astype(int))
    return vals[idx]


def _gcv(rss, n, n_terms, penalty):
    c_eff = n_terms + penalty * (n_terms - 1) / 2.0
    if c_eff >= n:
        return np.inf
    return (rss / n) / (1.0 - c_eff / n) ** 2


@register_model
class MarsModel(FittedModel):
    family = "mars"

    def __init__(self, spec, n_features, seed, terms, coefs):
        super().__init__(spec, n_features, seed)
        self.terms = [tuple((int(f), float(t), int(s)) for f, t, s in term)
                      for term in terms]
        self.coefs = np.asarray(coefs, dtype=np.float64)

    def _predict(self, X):
        B = np.column_stack([_term_column(X, term) for term in self.terms])
        return np.clip(B @ self.coefs, 0.0, 1.0)

    def _params_doc(self):
        return {
            "terms": [[[f, t, s] for f, t, s in term] for term in self.terms],
            "coefs": [float(c) for c in self.coefs],
        }

    @classmethod
    def _from_params(cls, spec, n_features, params):
        terms = [tuple((int(f), float(t), int(s)) for f, t, s in term)
                 for term in params["terms"]]
        return cls(spec, n_features, 0, terms, params["coefs"])


def fit_mars(spec: Mars, data: Dataset, rng: SeededRng) -> MarsModel:
    X = data.features
    y = data.labels.astype(np.float64)
    n, p = X.shape
    knots_by_feature = [_knot_candidates(X[:, j]) for j in range(p)]

    terms = [()]
    B = np.ones((n, 1), dtype=np.float64)
    y_var = float(np.sum((y - y.mean()) ** 2))
    gain_floor = max(_EPS * max(y_var, 1.0), _EPS)

    while len(terms) + 2 <= spec.max_terms:
        Q, _ = np.linalg.qr(B)
        resid = y - Q @ (Q.T @ y)
        best_gain = gain_floor
        best = None
        for parent_idx, parent in enumerate(terms):
            if len(parent) >= spec.max_degree:
                continue
            parent_col = B[:, parent_idx]
            used = {f for f, _, _ in parent}
            for j in range(p):
                if j in used:
                    continue
                xj = X[:, j]
                z = parent_col * xj
                qz = z - Q @ (Q.T @ z)
                nz = float(np.linalg.norm(qz))
                if nz > _EPS * max(1.0, float(np.linalg.norm(z))):
                    uz = qz / nz
                    gain_z = float(uz @ y) ** 2
                else:
                    uz = None
                    gain_z = 0.0
                knots = knots_by_feature[j]
                A = parent_col[:, None] * np.abs(xj[:, None] - knots[None, :])
                U = A - Q @ (Q.T @ A)
                if uz is not None:
                    U -= uz[:, None] * (uz @ A)[None, :]
                norms2 = np.einsum("ij,ij->j", U, U)
                proj = U.T @ resid
                scale2 = np.einsum("ij,ij->j", A, A)
                ok = norms2 > (_EPS * np.maximum(scale2, 1.0))
                gains = np.where(ok, proj**2 / np.where(ok, norms2, 1.0), 0.0)
                gains = gain_z + gains
                k = int(np.argmax(gains))
                if gains[k] > best_gain:
                    best_gain = float(gains[k])
                    best = (parent, j, float(knots[k]))
        if best is None:
            break
        parent, j, knot = best
        t_plus = parent + ((j, knot, 1),)
        t_minus = parent + ((j, knot, -1),)
        terms.extend([t_plus, t_minus])
        B = np.column_stack([B, _term_column(X, t_plus), _term_column(X, t_minus)])

    # backward deletion tracked by GCV; intercept never leaves
    def rss_of(cols):
        coef, _, _, _ = np.linalg.lstsq(B[:, cols], y, rcond=None)
        r = y - B[:, cols] @ coef
        return float(r @ r), coef

    working = list(range(len(terms)))
    rss, coef = rss_of(working)
    best_cols, best_coef = list(working), coef
    best_gcv = _gcv(rss, n, len(working), spec.gcv_penalty)
    while len(working) > 1:
        trial_best = None
        for drop in working:
            if drop == 0:
                continue
            cols = [c for c in working if c != drop]
            rss, coef = rss_of(cols)
            gcv = _gcv(rss, n, len(cols), spec.gcv_penalty)
            if trial_best is None or gcv < trial_best[0]:
                trial_best = (gcv, cols, coef)
        if trial_best is None:
            break
        gcv, working, coef = trial_best
        if gcv < best_gcv:
            best_gcv, best_cols, best_coef = gcv, list(working), coef

    final_terms = [terms[c] for c in best_cols]
    return MarsModel(spec, p, rng.key_hash, final_terms, best_coef)
