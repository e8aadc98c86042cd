"""Offline training glue: REM-looked-up features, model pairs, model files."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geo_rem import Rem, lookup_fast, normalize_direction
from .learners import (
    FEATURE_NAMES, CellVocabulary, FeatureVector, ForestModel, ForestParams, GprModel, encode,
    train_forest, train_gpr,
)


def rem_features(rem: Rem, samples) -> list[FeatureVector]:
    """Network context from the map at each sample's position, combined with
    the sample's own velocity and payload."""
    return [
        FeatureVector.from_context(lookup_fast(rem, s.position)[0], s.velocity, s.payload)
        for s in samples
    ]


def raw_features(samples) -> list[FeatureVector]:
    return [FeatureVector.from_sample(s) for s in samples]


def select_direction(samples, direction):
    direction = normalize_direction(direction)
    return [s for s in samples if s.direction == direction]


def fit_rate_forest(features, rates, params: ForestParams | None = None, seed: int = 0,
                    vocab: CellVocabulary | None = None) -> ForestModel:
    vocab = vocab or CellVocabulary(f.cell_id for f in features)
    return train_forest(encode(features, vocab), rates, params, seed, vocab, FEATURE_NAMES)


@dataclass
class ModelPair:
    forest: ForestModel
    gpr: GprModel
    direction: str

    def to_dict(self) -> dict:
        return {"direction": self.direction, "forest": self.forest.to_dict(),
                "gpr": self.gpr.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelPair":
        return cls(ForestModel.from_dict(d["forest"]), GprModel.from_dict(d["gpr"]),
                   normalize_direction(d["direction"]))

    def save(self, path, provenance: dict | None = None):
        payload = self.to_dict()
        if provenance is not None:
            payload["provenance"] = provenance
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "ModelPair":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def train_models(samples, rem: Rem, direction, forest_params: ForestParams | None = None,
                 seed: int = 0, gpr_hyperparams="auto", gpr_max_points: int = 2000) -> ModelPair:
    """Train the rate forest on REM features and the derivation model on its
    out-of-bag (predicted, measured) pairs."""
    direction = normalize_direction(direction)
    subset = select_direction(samples, direction)
    if not subset:
        raise ValueError(f"no {direction} samples to train on")
    feats = rem_features(rem, subset)
    y = np.array([s.data_rate for s in subset])
    forest = fit_rate_forest(feats, y, forest_params, seed)
    pred = forest.oob_prediction
    ok = np.isfinite(pred)
    if ok.sum() < 5:
        # too few out-of-bag rows (tiny data or no bootstrap); fall back to in-sample
        pred, ok = forest.predict(encode(feats, forest.vocab)), np.ones(len(y), bool)
    gpr = train_gpr(np.column_stack([pred[ok], y[ok]]), gpr_hyperparams,
                    max_points=gpr_max_points, seed=seed)
    return ModelPair(forest, gpr, direction)
