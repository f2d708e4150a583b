"""Base-learner specifications.

A LearnerSpec is one of seven frozen dataclasses.  Specs serialize to a flat
dict (``spec_to_doc``) used three ways: model persistence, CLI spec
documents, and the fingerprint that keys per-learner random streams.  The
fingerprint is a pure function of the spec's content, so two structurally
identical specs always draw identical randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

from ..core import InvalidSpecError, stable_hash


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InvalidSpecError(message)


@dataclass(frozen=True)
class Knn:
    """k-nearest-neighbor regression on binary labels."""

    k: int = 5
    backend: str = "kd_tree"

    def __post_init__(self):
        _require(isinstance(self.k, int) and self.k >= 1, "Knn: k must be >= 1")
        if self.backend == "kdtree":
            object.__setattr__(self, "backend", "kd_tree")
        _require(
            self.backend in ("kd_tree", "brute"),
            f"Knn: backend must be 'kd_tree' or 'brute', got {self.backend!r}",
        )


@dataclass(frozen=True)
class RandomForest:
    """Bagged Gini CART ensemble; mtry=None means ceil(sqrt(p)) at fit time."""

    n_trees: int = 500
    mtry: Optional[int] = None
    bootstrap_fraction: float = 0.632
    max_depth: Optional[int] = None
    min_leaf: int = 5

    def __post_init__(self):
        _require(self.n_trees >= 1, "RandomForest: n_trees must be >= 1")
        _require(
            self.mtry is None or self.mtry >= 1, "RandomForest: mtry must be >= 1"
        )
        _require(
            0.0 < self.bootstrap_fraction <= 1.0,
            "RandomForest: bootstrap_fraction must be in (0, 1]",
        )
        _require(
            self.max_depth is None or self.max_depth >= 1,
            "RandomForest: max_depth must be >= 1",
        )
        _require(self.min_leaf >= 1, "RandomForest: min_leaf must be >= 1")


@dataclass(frozen=True)
class RandomFerns:
    n_ferns: int = 50
    fern_depth: int = 8

    def __post_init__(self):
        _require(self.n_ferns >= 1, "RandomFerns: n_ferns must be >= 1")
        _require(
            1 <= self.fern_depth <= 16,
            "RandomFerns: fern_depth must be in [1, 16] (2^depth posterior bins)",
        )


@dataclass(frozen=True)
class CiTree:
    """Conditional inference tree: permutation-test splits, Bonferroni stop."""

    alpha: float = 0.05
    n_permutations: int = 499
    min_node: int = 20

    def __post_init__(self):
        _require(0.0 < self.alpha < 1.0, "CiTree: alpha must be in (0, 1)")
        _require(self.n_permutations >= 1, "CiTree: n_permutations must be >= 1")
        _require(self.min_node >= 2, "CiTree: min_node must be >= 2")


@dataclass(frozen=True)
class Mars:
    max_terms: int = 21
    max_degree: int = 2
    gcv_penalty: float = 3.0

    def __post_init__(self):
        _require(self.max_terms >= 1, "Mars: max_terms must be >= 1")
        _require(self.max_degree >= 1, "Mars: max_degree must be >= 1")
        _require(self.gcv_penalty >= 0.0, "Mars: gcv_penalty must be >= 0")


@dataclass(frozen=True)
class TreeBase:
    max_depth: int = 3

    def __post_init__(self):
        _require(self.max_depth >= 1, "TreeBase: max_depth must be >= 1")


@dataclass(frozen=True)
class LinearBase:
    pass


@dataclass(frozen=True)
class Boost:
    """Gradient boosting on logistic loss with tree or linear base learners."""

    n_rounds: int = 100
    shrinkage: float = 0.1
    base: Union[TreeBase, LinearBase] = field(default_factory=TreeBase)

    def __post_init__(self):
        _require(self.n_rounds >= 0, "Boost: n_rounds must be >= 0")
        _require(0.0 < self.shrinkage <= 1.0, "Boost: shrinkage must be in (0, 1]")
        _require(
            isinstance(self.base, (TreeBase, LinearBase)),
            "Boost: base must be TreeBase or LinearBase",
        )


@dataclass(frozen=True)
class Mlp:
    """Fully connected sigmoid network trained by minibatch SGD with momentum.

    bootstrap_fraction, when set, fits on a without-replacement subsample of
    that fraction of the training rows (the "bootstrap size" tuning knob).
    """

    hidden_sizes: tuple = (4, 2, 1)
    learning_rate: float = 0.1
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 32
    bootstrap_fraction: Optional[float] = None

    def __post_init__(self):
        sizes = tuple(int(h) for h in self.hidden_sizes)
        object.__setattr__(self, "hidden_sizes", sizes)
        _require(len(sizes) >= 1, "Mlp: hidden_sizes must be non-empty")
        _require(all(h >= 1 for h in sizes), "Mlp: hidden sizes must be positive")
        _require(
            math.isfinite(self.learning_rate) and self.learning_rate > 0.0,
            "Mlp: learning_rate must be positive",
        )
        _require(0.0 <= self.momentum < 1.0, "Mlp: momentum must be in [0, 1)")
        _require(self.epochs >= 0, "Mlp: epochs must be >= 0")
        _require(self.batch_size >= 1, "Mlp: batch_size must be >= 1")
        _require(
            self.bootstrap_fraction is None or 0.0 < self.bootstrap_fraction <= 1.0,
            "Mlp: bootstrap_fraction must be in (0, 1]",
        )


LearnerSpec = Union[Knn, RandomForest, RandomFerns, CiTree, Mars, Boost, Mlp]

_FAMILY_BY_TYPE = {
    Knn: "knn",
    RandomForest: "random_forest",
    RandomFerns: "random_ferns",
    CiTree: "citree",
    Mars: "mars",
    Boost: "boost",
    Mlp: "mlp",
}
_TYPE_BY_FAMILY = {name: cls for cls, name in _FAMILY_BY_TYPE.items()}


def family_of(spec: LearnerSpec) -> str:
    try:
        return _FAMILY_BY_TYPE[type(spec)]
    except KeyError:
        raise InvalidSpecError(f"not a LearnerSpec: {type(spec).__name__}")


def spec_to_doc(spec: LearnerSpec) -> dict:
    """Canonical dict form of a spec (JSON-safe, stable key order)."""
    family = family_of(spec)
    if isinstance(spec, Knn):
        body = {"k": spec.k, "backend": spec.backend}
    elif isinstance(spec, RandomForest):
        body = {
            "n_trees": spec.n_trees,
            "mtry": spec.mtry,
            "bootstrap_fraction": spec.bootstrap_fraction,
            "max_depth": spec.max_depth,
            "min_leaf": spec.min_leaf,
        }
    elif isinstance(spec, RandomFerns):
        body = {"n_ferns": spec.n_ferns, "fern_depth": spec.fern_depth}
    elif isinstance(spec, CiTree):
        body = {
            "alpha": spec.alpha,
            "n_permutations": spec.n_permutations,
            "min_node": spec.min_node,
        }
    elif isinstance(spec, Mars):
        body = {
            "max_terms": spec.max_terms,
            "max_degree": spec.max_degree,
            "gcv_penalty": spec.gcv_penalty,
        }
    elif isinstance(spec, Boost):
        if isinstance(spec.base, TreeBase):
            base = {"kind": "tree", "max_depth": spec.base.max_depth}
        else:
            base = {"kind": "linear"}
        body = {"n_rounds": spec.n_rounds, "shrinkage": spec.shrinkage, "base": base}
    elif isinstance(spec, Mlp):
        body = {
            "hidden_sizes": list(spec.hidden_sizes),
            "learning_rate": spec.learning_rate,
            "momentum": spec.momentum,
            "epochs": spec.epochs,
            "batch_size": spec.batch_size,
            "bootstrap_fraction": spec.bootstrap_fraction,
        }
    else:  # pragma: no cover - family_of already rejected it
        raise InvalidSpecError(f"unhandled spec {spec!r}")
    return {"family": family, **body}


def spec_from_doc(doc: dict) -> LearnerSpec:
    if not isinstance(doc, dict) or "family" not in doc:
        raise InvalidSpecError("learner spec document must be a dict with a 'family'")
    family = doc["family"]
    if family not in _TYPE_BY_FAMILY:
        raise InvalidSpecError(f"unknown learner family {family!r}")
    body = {k: v for k, v in doc.items() if k != "family"}
    try:
        if family == "boost" and "base" in body:
            base_doc = body["base"]
            if base_doc.get("kind") == "tree":
                body["base"] = TreeBase(max_depth=base_doc.get("max_depth", 3))
            elif base_doc.get("kind") == "linear":
                body["base"] = LinearBase()
            else:
                raise InvalidSpecError(f"unknown boost base {base_doc!r}")
        if family == "mlp" and "hidden_sizes" in body:
            body["hidden_sizes"] = tuple(body["hidden_sizes"])
        return _TYPE_BY_FAMILY[family](**body)
    except TypeError as exc:
        raise InvalidSpecError(f"bad fields for family {family!r}: {exc}")


def spec_fingerprint(spec: LearnerSpec) -> int:
    """64-bit content hash; equal specs share random streams by construction."""
    doc = spec_to_doc(spec)
    parts = []
    for key in sorted(doc):
        parts.extend((key, repr(doc[key])))
    return stable_hash("learner-spec", *parts)
