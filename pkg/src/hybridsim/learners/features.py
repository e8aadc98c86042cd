from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

FEATURE_NAMES = ("rsrp", "rsrq", "sinr", "cqi", "ta", "velocity", "cell_id", "payload_size")
UNKNOWN_CELL = -1


@dataclass(frozen=True, slots=True)
class FeatureVector:
    """Model input: network context (from the REM or live measurement),
    mobility context and application context."""

    rsrp: float
    rsrq: float
    sinr: float
    cqi: float
    ta: float
    velocity: float
    cell_id: int
    payload_size: float

    @classmethod
    def from_context(cls, network: dict, velocity: float, payload_size: float) -> "FeatureVector":
        return cls(
            network["rsrp"], network["rsrq"], network["sinr"], network["cqi"], network["ta"],
            velocity, network["cell_id"], payload_size,
        )

    @classmethod
    def from_sample(cls, sample) -> "FeatureVector":
        return cls(
            sample.rsrp, sample.rsrq, sample.sinr, sample.cqi, sample.ta,
            sample.velocity, sample.cell_id, sample.payload,
        )

    def as_tuple(self) -> tuple:
        return astuple(self)


class CellVocabulary:
    """Integer codes for cell identifiers seen in training; unseen ids map to -1."""

    def __init__(self, cell_ids=()):
        self.ids = tuple(sorted({int(c) for c in cell_ids}))
        self._codes = {c: k for k, c in enumerate(self.ids)}

    def code(self, cell_id) -> int:
        return self._codes.get(int(cell_id), UNKNOWN_CELL)

    def __len__(self):
        return len(self.ids)

    def __eq__(self, other):
        return isinstance(other, CellVocabulary) and self.ids == other.ids


def encode(features, vocab: CellVocabulary) -> np.ndarray:
    """Stack feature vectors into an (n, 8) float matrix."""
    rows = [
        (f.rsrp, f.rsrq, f.sinr, f.cqi, f.ta, f.velocity, vocab.code(f.cell_id), f.payload_size)
        for f in features
    ]
    return np.array(rows, dtype=float).reshape(-1, len(FEATURE_NAMES))
