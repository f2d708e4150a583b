"""Versioned JSON persistence for fitted models.

A model document is ``{"format": "stackbench-model", "version": 1,
"family": ..., "spec": ..., "n_features": ..., "seed": ..., "params": ...}``.
Ensemble documents nest child model documents in their params.  JSON float
serialization uses Python's shortest round-trip repr, so save -> load ->
predict is byte-identical to the in-memory model's predictions.
"""

from __future__ import annotations

import json

from .core import LoadError, atomic_write_text
from .learners.base import MODEL_REGISTRY, FittedModel

MODEL_FORMAT = "stackbench-model"
MODEL_SCHEMA_VERSION = 1


def model_to_doc(model: FittedModel) -> dict:
    return {"format": MODEL_FORMAT, "version": MODEL_SCHEMA_VERSION, **model.to_doc()}


def model_from_doc(doc: dict) -> FittedModel:
    if not isinstance(doc, dict):
        raise LoadError("model document must be a JSON object")
    if doc.get("format") != MODEL_FORMAT:
        raise LoadError(f"not a {MODEL_FORMAT} document (format={doc.get('format')!r})")
    version = doc.get("version")
    if version != MODEL_SCHEMA_VERSION:
        raise LoadError(
            f"unsupported model schema version {version!r} "
            f"(this build reads version {MODEL_SCHEMA_VERSION})"
        )
    family = doc.get("family")
    if family not in MODEL_REGISTRY:
        raise LoadError(f"unknown model family {family!r}")
    try:
        return MODEL_REGISTRY[family].from_doc(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"malformed {family!r} model document: {exc}")


def save_model(model: FittedModel, path) -> None:
    atomic_write_text(path, json.dumps(model_to_doc(model)))


def load_model(path) -> FittedModel:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise LoadError(f"cannot read model file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise LoadError(f"model file {path} is not valid JSON: {exc}")
    return model_from_doc(doc)
