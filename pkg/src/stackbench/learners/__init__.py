"""Base learner families: spec in, immutable probability model out."""

from __future__ import annotations

import time

from ..core import Dataset, FitError, SeededRng
from .base import MODEL_REGISTRY, FittedModel, subsample_indices
from .boost import BoostModel, fit_boost, log_loss
from .citree import CiTreeModel, citree_split, fit_citree, permutation_pvalues
from .ferns import RandomFernsModel, fern_bin_index, fit_random_ferns
from .forest import (
    DecisionTreeModel,
    RandomForestModel,
    fit_decision_tree,
    fit_random_forest,
)
from .knn import KdTree, KnnModel, brute_query_batch, fit_knn, kdtree_query
from .mars import MarsModel, fit_mars, hinge
from .mlp import MlpModel, fit_mlp, forward, init_params, loss_and_grads
from .specs import (
    Boost,
    CiTree,
    Knn,
    LearnerSpec,
    LinearBase,
    Mars,
    Mlp,
    RandomFerns,
    RandomForest,
    TreeBase,
    family_of,
    spec_fingerprint,
    spec_from_doc,
    spec_to_doc,
)

_FITTERS = {
    Knn: fit_knn,
    RandomForest: fit_random_forest,
    RandomFerns: fit_random_ferns,
    CiTree: fit_citree,
    Mars: fit_mars,
    Boost: fit_boost,
    Mlp: fit_mlp,
}


def fit(spec: LearnerSpec, data: Dataset, rng: SeededRng) -> FittedModel:
    """Train one base learner; deterministic for fixed (spec, data, rng key)."""
    family = family_of(spec)
    if data.n_rows == 0:
        raise FitError(f"[{family}] empty training data")
    fitter = _FITTERS[type(spec)]
    started = time.perf_counter()
    model = fitter(spec, data, rng)
    model.fit_seconds = time.perf_counter() - started
    return model


def predict(model: FittedModel, features):
    return model.predict(features)


__all__ = [
    "Boost", "BoostModel", "CiTree", "CiTreeModel", "DecisionTreeModel",
    "FittedModel", "KdTree", "Knn", "KnnModel", "LearnerSpec", "LinearBase",
    "Mars", "MarsModel", "Mlp", "MlpModel", "MODEL_REGISTRY", "RandomFerns",
    "RandomFernsModel", "RandomForest", "RandomForestModel", "TreeBase",
    "brute_query_batch", "citree_split", "family_of", "fern_bin_index", "fit",
    "fit_boost", "fit_citree", "fit_decision_tree", "fit_knn", "fit_mars",
    "fit_mlp", "fit_random_ferns", "fit_random_forest", "forward", "hinge",
    "init_params", "kdtree_query", "log_loss", "loss_and_grads",
    "permutation_pvalues", "predict", "spec_fingerprint", "spec_from_doc",
    "spec_to_doc", "subsample_indices",
]
