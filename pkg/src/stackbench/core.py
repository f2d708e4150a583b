"""Shared data model: datasets, deterministic RNG, splits, and binary metrics.

Everything downstream (learners, ensembles, the benchmark harness) moves data
around as a `Dataset` and scores models through the metric functions here.
All containers are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata


class InvalidArgumentError(ValueError):
    """An operation was called with arguments violating its preconditions."""


class InvalidSpecError(ValueError):
    """A learner/ensemble spec has a hyperparameter outside its legal range."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given labels (e.g. single-class AUC)."""


class FitError(RuntimeError):
    """A model fit failed; message carries the learner family tag."""


class LoadError(ValueError):
    """A file (CSV, model document, plan) could not be parsed."""


def stable_hash(*parts) -> int:
    """Collapse a key tuple into a 64-bit unsigned seed.

    SHA-256 over the '\\x1f'-joined string forms of the parts, truncated to
    64 bits.  Platform- and process-independent, so anything seeded through
    here reproduces exactly across runs and thread counts.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class SeededRng:
    """Deterministic random stream with hierarchical derivation.

    Backed by numpy's Philox 4x64 counter-based bit generator, keyed by
    ``stable_hash(master_seed, *key)``.  The generator family is fixed and
    must never change: replications and the benchmark harness rely on
    identical seeds producing identical value sequences on every platform.

    Parallel work never shares one stream; derive an independent child per
    task with `child`, keyed by stable identifiers (fold index, tree index,
    algorithm name, ...).
    """

    __slots__ = ("master_seed", "key", "key_hash", "gen")

    def __init__(self, master_seed: int, key: tuple = ()):
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        # a scalar key means a length-1 derivation path, not its characters
        self.key = tuple(key) if isinstance(key, (tuple, list)) else (key,)
        self.key_hash = stable_hash(self.master_seed, *self.key)
        self.gen = np.random.Generator(np.random.Philox(key=self.key_hash))

    def child(self, *key_parts) -> "SeededRng":
        """Independent stream for a subtask, keyed by (this key, *key_parts)."""
        return SeededRng(self.master_seed, self.key + tuple(key_parts))

    def __repr__(self):
        return f"SeededRng(master_seed={self.master_seed}, key={self.key!r})"


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """An n x p real feature matrix with binary labels.

    Invariants (checked on construction): one label per row, all feature
    values finite, labels exactly 0 or 1.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise InvalidArgumentError("features must be a 2-d matrix")
        labels = np.asarray(self.labels, dtype=np.float64)
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise InvalidArgumentError(
                f"labels length {labels.shape} does not match "
                f"{feats.shape[0]} feature rows"
            )
        if not np.all(np.isfinite(feats)):
            raise InvalidArgumentError("features contain NaN or infinity")
        if not np.all((labels == 0.0) | (labels == 1.0)):
            raise InvalidArgumentError("labels must be exactly 0 or 1")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != feats.shape[1]:
            raise InvalidArgumentError(
                f"{len(names)} feature names for {feats.shape[1]} columns"
            )
        object.__setattr__(self, "features", _freeze(feats))
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        """Row subset as a new Dataset (copies)."""
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names)


def check_probabilities(values: np.ndarray) -> np.ndarray:
    """Validate a probability vector: finite, within [0, 1]."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 1:
        raise InvalidArgumentError("probabilities must be a 1-d vector")
    if not np.all(np.isfinite(vals)) or vals.min(initial=0.0) < 0.0 or vals.max(initial=0.0) > 1.0:
        raise InvalidArgumentError("probabilities must lie in [0, 1]")
    return vals


@dataclass(frozen=True)
class TrainTestSplit:
    """Disjoint train/test row indices covering exactly {0..n-1}."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    train_fraction: float

    def __post_init__(self):
        tr = np.asarray(self.train_indices, dtype=np.intp)
        te = np.asarray(self.test_indices, dtype=np.intp)
        n = tr.size + te.size
        union = np.concatenate([tr, te])
        if np.unique(union).size != n or union.min() != 0 or union.max() != n - 1:
            raise InvalidArgumentError("train/test indices must partition {0..n-1}")
        object.__setattr__(self, "train_indices", _freeze(np.sort(tr)))
        object.__setattr__(self, "test_indices", _freeze(np.sort(te)))


@dataclass(frozen=True)
class MetricReport:
    """Test-set metrics for one fitted model plus its fit wall time.

    fnr = FN/(FN+TP), fpr = FP/(FP+TN) at the decision threshold;
    fit_seconds covers the fit call only (prediction time excluded).
    """

    accuracy: float
    auc: float
    fnr: float
    fpr: float
    fit_seconds: float


def _train_size(n: int, train_fraction: float) -> int:
    if n < 2:
        raise InvalidArgumentError(f"need at least 2 rows to split, got {n}")
    if not (0.0 < train_fraction < 1.0):
        raise InvalidArgumentError(f"train_fraction must be in (0,1), got {train_fraction}")
    # round-half-up so |train| = round(fraction * n) is unambiguous
    k = int(np.floor(train_fraction * n + 0.5))
    if k < 1 or k > n - 1:
        raise InvalidArgumentError(
            f"fraction {train_fraction} leaves an empty part for n={n}"
        )
    return k


def split(n: int, train_fraction: float, rng: SeededRng) -> TrainTestSplit:
    """Uniformly random permutation split; |train| = round(fraction * n)."""
    k = _train_size(n, train_fraction)
    perm = rng.gen.permutation(n)
    return TrainTestSplit(perm[:k], perm[k:], train_fraction)


def stratified_split(labels, train_fraction: float, rng: SeededRng) -> TrainTestSplit:
    """Per-class permutation split: each class contributes round(f * n_class) rows.

    Raises InvalidArgumentError when only one class is present.
    """
    y = np.asarray(labels)
    n = y.size
    _train_size(n, train_fraction)
    classes = np.unique(y)
    if classes.size < 2:
        raise InvalidArgumentError("stratified split needs both classes present")
    train_parts = []
    test_parts = []
    for c in classes:
        idx = np.flatnonzero(y == c)
        k = int(np.floor(train_fraction * idx.size + 0.5))
        perm = rng.gen.permutation(idx.size)
        train_parts.append(idx[perm[:k]])
        test_parts.append(idx[perm[k:]])
    return TrainTestSplit(
        np.concatenate(train_parts), np.concatenate(test_parts), train_fraction
    )


def _check_lengths(probs, labels):
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise InvalidArgumentError(
            f"probs shape {p.shape} does not match labels shape {y.shape}"
        )
    return p, y


def accuracy(probs, labels, threshold: float = 0.5) -> float:
    """Fraction of rows where (prob >= threshold) equals the label."""
    p, y = _check_lengths(probs, labels)
    pred = (p >= threshold).astype(np.float64)
    return float(np.mean(pred == y))


def auc(probs, labels) -> float:
    """Mann-Whitney AUC: P(random positive outscores random negative), ties 1/2."""
    p, y = _check_lengths(probs, labels)
    n_pos = int(np.sum(y == 1.0))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = rankdata(p, method="average")
    u = np.sum(ranks[y == 1.0]) - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion_rates(probs, labels, threshold: float = 0.5) -> tuple[float, float]:
    """(FNR, FPR) at the threshold: FN/(FN+TP) and FP/(FP+TN)."""
    p, y = _check_lengths(probs, labels)
    pred = p >= threshold
    pos = y == 1.0
    n_pos = int(np.sum(pos))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("confusion rates need both classes present")
    fn = int(np.sum(pos & ~pred))
    fp = int(np.sum(~pos & pred))
    return fn / n_pos, fp / n_neg


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory plus rename, so readers
    never observe a truncated file and interrupted runs leave no partial output."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
