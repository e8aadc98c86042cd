"""
Multi-layer radio environmental maps.

Measurements are bucketed into square cells of width ``c`` anchored at the
map origin; every network-context indicator gets its own layer. A position
``p`` is looked up in cell ``floor((p - origin) / c)``.
"""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .metrics import mae, rmse

log = logging.getLogger(__name__)

NUMERIC_LAYERS = ("rsrp", "rsrq", "sinr", "cqi", "ta")
CATEGORICAL_LAYERS = ("cell_id",)
LAYERS = NUMERIC_LAYERS + CATEGORICAL_LAYERS

UPLINK = "uplink"
DOWNLINK = "downlink"
_DIRECTION_ALIASES = {"ul": UPLINK, "uplink": UPLINK, "dl": DOWNLINK, "downlink": DOWNLINK}


def normalize_direction(direction: str) -> str:
    try:
        return _DIRECTION_ALIASES[str(direction).strip().lower()]
    except KeyError:
        raise ValueError(f"unknown link direction {direction!r}") from None


@dataclass(frozen=True, slots=True)
class MeasurementSample:
    """One geo-tagged drive-test record.

    Positions are meters in a local planar frame, ``payload`` is in bytes and
    ``data_rate`` in MBit/s.
    """

    x: float
    y: float
    t: float
    rsrp: float
    rsrq: float
    sinr: float
    cqi: int
    ta: int
    velocity: float
    cell_id: int
    payload: int
    data_rate: float
    direction: str = UPLINK

    def __post_init__(self):
        # NaN deliberately slips through here; build_rem rejects non-finite rows.
        if not 0 <= self.cqi <= 15:
            raise ValueError(f"cqi {self.cqi} outside [0, 15]")
        if self.ta < 0:
            raise ValueError(f"negative timing advance {self.ta}")
        if self.velocity < 0:
            raise ValueError(f"negative velocity {self.velocity}")
        if self.data_rate < 0:
            raise ValueError(f"negative data rate {self.data_rate}")
        if self.payload <= 0:
            raise ValueError(f"payload must be positive, got {self.payload}")
        object.__setattr__(self, "direction", normalize_direction(self.direction))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def is_finite(self) -> bool:
        return all(
            math.isfinite(v)
            for v in (self.x, self.y, self.rsrp, self.rsrq, self.sinr, self.cqi, self.ta)
        )


@dataclass(frozen=True)
class RemLayer:
    name: str
    cells: dict  # (i, j) -> (value, count)

    def __len__(self):
        return len(self.cells)


class EmptyRemError(ValueError):
    pass


def grid_index(position, origin, cell_width) -> tuple[int, int]:
    return (
        math.floor((position[0] - origin[0]) / cell_width),
        math.floor((position[1] - origin[1]) / cell_width),
    )


def _mode(values) -> int:
    counts = Counter(values)
    best = max(counts.values())
    return min(v for v, n in counts.items() if n == best)


@dataclass(frozen=True)
class Rem:
    """Immutable radio environmental map.

    ``layers`` maps each indicator name to a :class:`RemLayer`. All layers
    share ``origin`` and ``cell_width`` and are populated on the same cells.
    """

    cell_width: float
    origin: tuple[float, float]
    layers: dict
    rejected: int = 0
    _bundles: dict = field(init=False, repr=False, compare=False)
    _centers: np.ndarray = field(init=False, repr=False, compare=False)
    _keys: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.cell_width > 0:
            raise ValueError(f"cell width must be positive, got {self.cell_width}")
        keys = set()
        for layer in self.layers.values():
            keys.update(layer.cells)
        keys = sorted(keys)
        bundles = {
            k: {name: layer.cells[k][0] for name, layer in self.layers.items()}
            for k in keys
        }
        centers = np.array(
            [[(i + 0.5), (j + 0.5)] for i, j in keys], dtype=float
        ).reshape(-1, 2)
        object.__setattr__(self, "_bundles", bundles)
        object.__setattr__(self, "_keys", keys)
        object.__setattr__(self, "_centers", centers)

    @property
    def cells(self) -> list[tuple[int, int]]:
        """Populated grid indices in lexicographic order."""
        return list(self._keys)

    def populated_counts(self) -> dict[str, int]:
        return {name: len(layer) for name, layer in self.layers.items()}

    def index_of(self, position) -> tuple[int, int]:
        return grid_index(position, self.origin, self.cell_width)

    def cell_center(self, index) -> tuple[float, float]:
        return (
            self.origin[0] + (index[0] + 0.5) * self.cell_width,
            self.origin[1] + (index[1] + 0.5) * self.cell_width,
        )

    def nearest_cell(self, position) -> tuple[int, int]:
        if not self._keys:
            raise EmptyRemError("map has no populated cells")
        # distances in cell units keep symmetric ties exact
        q = np.array(
            [(position[0] - self.origin[0]) / self.cell_width,
             (position[1] - self.origin[1]) / self.cell_width]
        )
        d2 = ((self._centers - q) ** 2).sum(axis=1)
        # keys are sorted, so argmin yields the lexicographically smallest tie
        return self._keys[int(np.argmin(d2))]

    def to_dict(self) -> dict:
        return {
            "origin": list(self.origin),
            "cell_width": self.cell_width,
            "layers": {
                name: [[i, j, v, n] for (i, j), (v, n) in sorted(layer.cells.items())]
                for name, layer in self.layers.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Rem":
        layers = {}
        for name, rows in data["layers"].items():
            cells = {}
            for i, j, v, n in rows:
                if n < 1:
                    raise ValueError(f"layer {name}: cell ({i}, {j}) has count {n}")
                if name in CATEGORICAL_LAYERS:
                    v = int(v)
                cells[(int(i), int(j))] = (v, int(n))
            layers[name] = RemLayer(name, cells)
        return cls(float(data["cell_width"]), tuple(map(float, data["origin"])), layers)

    def save(self, path, provenance: dict | None = None):
        payload = self.to_dict()
        if provenance is not None:
            payload["provenance"] = provenance
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)

    @classmethod
    def load(cls, path) -> "Rem":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_rem(
    samples: Sequence[MeasurementSample],
    cell_width: float,
    origin: tuple[float, float] | None = None,
) -> Rem:
    """Aggregate samples into a multi-layer map.

    Numeric layers hold the per-cell arithmetic mean, ``cell_id`` the mode
    (ties go to the smallest identifier). ``origin`` defaults to the
    bounding-box minimum of the accepted samples; pass it explicitly to align
    grids of different widths.
    """
    if not cell_width > 0:
        raise ValueError(f"cell width must be positive, got {cell_width}")
    if len(samples) == 0:
        raise EmptyRemError("cannot build a map from an empty sample set")
    good = [s for s in samples if s.is_finite()]
    rejected = len(samples) - len(good)
    if rejected:
        log.warning("rejected %d sample(s) with non-finite position or features", rejected)
    if not good:
        raise EmptyRemError("no finite samples left to build a map from")

    pos = np.array([(s.x, s.y) for s in good], dtype=float)
    if origin is None:
        origin = (float(pos[:, 0].min()), float(pos[:, 1].min()))
    origin = (float(origin[0]), float(origin[1]))
    idx = np.floor((pos - np.asarray(origin)) / cell_width).astype(np.int64)
    keys, inverse = np.unique(idx, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    counts = np.bincount(inverse, minlength=len(keys))
    key_tuples = [(int(i), int(j)) for i, j in keys]

    layers = {}
    for name in NUMERIC_LAYERS:
        vals = np.array([getattr(s, name) for s in good], dtype=float)
        means = np.bincount(inverse, weights=vals, minlength=len(keys)) / counts
        layers[name] = RemLayer(
            name, {k: (float(m), int(n)) for k, m, n in zip(key_tuples, means, counts)}
        )
    groups: dict[int, list] = {}
    for cell, s in zip(inverse, good):
        groups.setdefault(int(cell), []).append(s.cell_id)
    layers["cell_id"] = RemLayer(
        "cell_id",
        {key_tuples[c]: (_mode(ids), len(ids)) for c, ids in groups.items()},
    )
    return Rem(float(cell_width), origin, layers, rejected=rejected)


def lookup(rem: Rem, position) -> dict | None:
    """Per-layer aggregates of the cell containing ``position``; None on a miss."""
    bundle = rem._bundles.get(rem.index_of(position))
    return None if bundle is None else dict(bundle)


def lookup_with_fallback(rem: Rem, position) -> dict:
    """Like :func:`lookup`, but a miss falls back to the nearest populated cell
    (by distance to cell centers, ties to the smallest ``(i, j)``)."""
    bundle = rem._bundles.get(rem.index_of(position))
    if bundle is None:
        bundle = rem._bundles[rem.nearest_cell(position)]
    return dict(bundle)


def lookup_fast(rem: Rem, position) -> tuple[dict, bool]:
    """Fallback lookup that also reports whether the plain lookup missed.

    Returns the shared internal bundle; callers must not mutate it.
    """
    bundle = rem._bundles.get(rem.index_of(position))
    if bundle is not None:
        return bundle, False
    return rem._bundles[rem.nearest_cell(position)], True


def miss_ratio(rem: Rem, positions: Iterable) -> float:
    positions = list(positions)
    if not positions:
        raise ValueError("miss ratio needs at least one position")
    misses = sum(1 for p in positions if rem.index_of(p) not in rem._bundles)
    return misses / len(positions)


def layer_lookup_error(rem: Rem, holdout: Sequence[MeasurementSample], layer: str):
    """(rmse, mae) of fallback lookups against each holdout sample's own value."""
    if layer in CATEGORICAL_LAYERS:
        raise ValueError(f"layer {layer!r} is categorical; use cell_id_mismatch_rate")
    if layer not in NUMERIC_LAYERS:
        raise ValueError(f"unknown layer {layer!r}")
    if len(holdout) == 0:
        raise ValueError("holdout set is empty")
    pred = [lookup_fast(rem, s.position)[0][layer] for s in holdout]
    truth = [getattr(s, layer) for s in holdout]
    return rmse(pred, truth), mae(pred, truth)


def cell_id_mismatch_rate(rem: Rem, holdout: Sequence[MeasurementSample]) -> float:
    if len(holdout) == 0:
        raise ValueError("holdout set is empty")
    wrong = sum(lookup_fast(rem, s.position)[0]["cell_id"] != s.cell_id for s in holdout)
    return wrong / len(holdout)
