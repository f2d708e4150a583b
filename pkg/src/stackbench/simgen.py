"""Synthetic binary-classification conditions and a Bayes-rate oracle.

Nine conditions cross three predictor-relationship forms (linear, nonlinear,
mixed) with two additive-noise levels, where the high-noise level also comes
in a label-contaminated variant.  Every condition uses 4 signal features and
9 pure-noise features, all i.i.d. standard Gaussian.

The latent score is s = eta(x1..x4) + eps with eps ~ N(0, sigma^2) and the
label is y = 1{s > 0}; contamination then flips each label independently.
That construction keeps the optimal classifier analytic: given x, the best
guess is 1{eta(x) > 0} and its accuracy is Phi(|eta(x)|/sigma), so the Bayes
rate is a one-dimensional Monte-Carlo integral over the feature law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .core import Dataset, InvalidArgumentError, SeededRng

GENERATOR_VERSION = 1

N_TRUE = 4
N_NOISE = 9
N_FEATURES = N_TRUE + N_NOISE

SIGMA = {"low": 0.5, "high": 2.0}

RELATIONSHIPS = ("linear", "nonlinear", "mixed")
NOISE_LEVELS = ("low", "high")

DEFAULT_FLIP_RATE = 0.075

FEATURE_NAMES = tuple(f"x{i + 1}" for i in range(N_FEATURES))


@dataclass(frozen=True)
class SimCondition:
    """One cell of the simulation design.

    ``misclassification_rate`` is only permitted at the high noise level,
    and must lie in [0.05, 0.10] when present.
    """

    relationship: str
    noise: str
    misclassification_rate: Optional[float] = None

    def __post_init__(self):
        if self.relationship not in RELATIONSHIPS:
            raise InvalidArgumentError(
                f"relationship must be one of {RELATIONSHIPS}, got {self.relationship!r}"
            )
        if self.noise not in NOISE_LEVELS:
            raise InvalidArgumentError(
                f"noise must be one of {NOISE_LEVELS}, got {self.noise!r}"
            )
        r = self.misclassification_rate
        if r is not None:
            r = float(r)
            object.__setattr__(self, "misclassification_rate", r)
            if self.noise != "high":
                raise InvalidArgumentError(
                    "misclassification is only defined for the high noise level"
                )
            if not 0.05 <= r <= 0.10:
                raise InvalidArgumentError(
                    f"misclassification rate must be in [0.05, 0.10], got {r}"
                )

    @property
    def condition_id(self) -> str:
        base = f"{self.relationship}-{self.noise}"
        return base + "-mis" if self.misclassification_rate is not None else base

    @property
    def sigma(self) -> float:
        return SIGMA[self.noise]

    def to_doc(self) -> dict:
        return {
            "relationship": self.relationship,
            "noise": self.noise,
            "misclassification_rate": self.misclassification_rate,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "SimCondition":
        return cls(
            relationship=doc["relationship"],
            noise=doc["noise"],
            misclassification_rate=doc.get("misclassification_rate"),
        )

    @classmethod
    def from_id(cls, condition_id: str) -> "SimCondition":
        parts = condition_id.split("-")
        if len(parts) == 2:
            return cls(relationship=parts[0], noise=parts[1])
        if len(parts) == 3 and parts[2] == "mis":
            return cls(relationship=parts[0], noise=parts[1],
                       misclassification_rate=DEFAULT_FLIP_RATE)
        raise InvalidArgumentError(
            f"unknown condition id {condition_id!r}; expected e.g. 'linear-low' "
            f"or 'mixed-high-mis'"
        )


def signal(relationship: str, X: np.ndarray) -> np.ndarray:
    """eta(x) for the given relationship form.

    The forms are centered so that P(eta > 0) is about one half:
    x2^2 - 1 has mean zero, sin and the interaction are symmetric.
    """
    x1, x2, x3, x4 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    if relationship == "linear":
        return 1.5 * x1 - 2.0 * x2 + x3 + 0.5 * x4
    if relationship == "nonlinear":
        return 2.0 * np.sin(2.0 * x1) + (x2 ** 2 - 1.0) + 1.5 * x3 * x4
    if relationship == "mixed":
        return 1.5 * x1 - 2.0 * x2 + 2.0 * np.sin(2.0 * x3) + (x4 ** 2 - 1.0)
    raise InvalidArgumentError(f"unknown relationship {relationship!r}")


def generate_with_flips(condition: SimCondition, n: int,
                        rng: SeededRng) -> tuple:
    """(Dataset, flipped row indices); deterministic given (condition, n, key)."""
    if n < 10:
        raise InvalidArgumentError(f"generate needs n >= 10, got {n}")
    gen = rng.child("features").gen
    X = gen.standard_normal((n, N_FEATURES))
    eta = signal(condition.relationship, X)
    eps = rng.child("noise").gen.standard_normal(n) * condition.sigma
    y = (eta + eps > 0.0).astype(np.int64)
    flipped = np.empty(0, dtype=np.int64)
    rate = condition.misclassification_rate
    if rate is not None:
        u = rng.child("flips").gen.random(n)
        flipped = np.flatnonzero(u < rate)
        y[flipped] = 1 - y[flipped]
    return Dataset(X, y, FEATURE_NAMES), flipped


def generate(condition: SimCondition, n: int, rng: SeededRng) -> Dataset:
    data, _ = generate_with_flips(condition, n, rng)
    return data


def bayes_accuracy(condition: SimCondition, n_mc: int, rng: SeededRng,
                   chunk: int = 250_000) -> float:
    """Monte-Carlo accuracy of the optimal classifier 1{eta(x) > 0}.

    Per draw the optimal decision is right with probability
    max(Phi(|eta|/sigma), shared by both tails) = Phi(|eta|/sigma); label
    flipping at rate r turns accuracy a into (1-r)a + r(1-a).
    """
    if n_mc < 1:
        raise InvalidArgumentError(f"n_mc must be positive, got {n_mc}")
    gen = rng.child("bayes").gen
    total = 0.0
    left = n_mc
    while left > 0:
        m = min(chunk, left)
        X = gen.standard_normal((m, N_TRUE))
        eta = signal(condition.relationship, np.column_stack(
            [X, np.zeros((m, N_FEATURES - N_TRUE))]))
        total += float(ndtr(np.abs(eta) / condition.sigma).sum())
        left -= m
    acc = total / n_mc
    rate = condition.misclassification_rate
    if rate is not None:
        acc = (1.0 - rate) * acc + rate * (1.0 - acc)
    return acc


def condition_catalog() -> list:
    """The nine design cells: per relationship, low noise, high noise, and
    high noise with contamination, in that order."""
    out = []
    for rel in RELATIONSHIPS:
        out.append(SimCondition(rel, "low"))
        out.append(SimCondition(rel, "high"))
        out.append(SimCondition(rel, "high", DEFAULT_FLIP_RATE))
    return out
