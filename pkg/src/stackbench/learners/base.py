"""Shared FittedModel machinery: validation, registry, subsampling."""

from __future__ import annotations

import math

import numpy as np

from ..core import InvalidArgumentError

# family tag -> model class, populated by register_model; io.load_model uses it
MODEL_REGISTRY: dict = {}


def register_model(cls):
    MODEL_REGISTRY[cls.family] = cls
    return cls


class FittedModel:
    """Base for every trained model.

    Subclasses set the class attribute ``family``, fill ``n_features``,
    ``seed`` (the rng key the fit consumed) and ``spec``, and implement
    ``_predict(X) -> probs``, ``_params_doc()`` and ``_from_params(...)``.
    Instances are treated as immutable after fit.
    """

    family = "abstract"

    def __init__(self, spec, n_features: int, seed: int):
        self.spec = spec
        self.n_features = int(n_features)
        self.seed = int(seed)
        self.fit_seconds = 0.0

    def predict(self, features) -> np.ndarray:
        X = np.ascontiguousarray(features, dtype=np.float64)
        if X.ndim != 2:
            raise InvalidArgumentError(
                f"predict expects a 2-d matrix, got ndim={X.ndim}"
            )
        if X.shape[1] != self.n_features:
            raise InvalidArgumentError(
                f"predict: model was trained on {self.n_features} features, "
                f"got {X.shape[1]}"
            )
        if not np.isfinite(X).all():
            raise InvalidArgumentError("predict: features contain NaN or infinity")
        probs = self._predict(X)
        return np.asarray(probs, dtype=np.float64)

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # --- persistence -----------------------------------------------------
    def to_doc(self) -> dict:
        return {
            "family": self.family,
            "spec": self._spec_doc(),
            "n_features": self.n_features,
            "seed": self.seed,
            "fit_seconds": self.fit_seconds,
            "params": self._params_doc(),
        }

    def _spec_doc(self) -> dict:
        from .specs import spec_to_doc

        return spec_to_doc(self.spec)

    @classmethod
    def _spec_from_doc(cls, doc: dict):
        from .specs import spec_from_doc

        return spec_from_doc(doc)

    def _params_doc(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_doc(cls, doc: dict):
        model = cls._from_params(
            cls._spec_from_doc(doc["spec"]), int(doc["n_features"]), doc["params"]
        )
        model.seed = int(doc.get("seed", 0))
        model.fit_seconds = float(doc.get("fit_seconds", 0.0))
        return model

    @classmethod
    def _from_params(cls, spec, n_features: int, params: dict):
        raise NotImplementedError


def model_from_bare(doc: dict):
    """Rebuild a model from an envelope-free document via the registry."""
    from ..core import LoadError

    if not isinstance(doc, dict) or "family" not in doc:
        raise LoadError("model document must be a dict with a 'family' tag")
    cls = MODEL_REGISTRY.get(doc["family"])
    if cls is None:
        raise LoadError(f"unknown model family {doc['family']!r}")
    return cls.from_doc(doc)


def subsample_indices(n: int, fraction: float, gen: np.random.Generator) -> np.ndarray:
    """round(fraction*n) distinct row indices, ascending; fraction 1.0 is all rows.

    Sampling is without replacement so that fraction 1.0 degenerates to the
    identity, which several composition invariants rely on.
    """
    if not 0.0 < fraction <= 1.0:
        raise InvalidArgumentError(f"subsample fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return np.arange(n, dtype=np.int64)
    m = max(1, int(math.floor(fraction * n + 0.5)))
    m = min(m, n)
    picked = gen.permutation(n)[:m]
    return np.sort(picked).astype(np.int64)


def f64_list(arr) -> list:
    return [float(v) for v in np.asarray(arr, dtype=np.float64).ravel()]


def int_list(arr) -> list:
    return [int(v) for v in np.asarray(arr).ravel()]
