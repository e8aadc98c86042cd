"""Cell-width sweep: lookup accuracy, coverage and data-rate error per width."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..geo_rem import (
    DOWNLINK, NUMERIC_LAYERS, UPLINK, build_rem, cell_id_mismatch_rate, layer_lookup_error,
    miss_ratio, normalize_direction,
)
from ..learners import ForestParams, encode
from ..metrics import mae, rmse
from ..pipeline import fit_rate_forest, rem_features, select_direction
from .cv import kfold_indices, take

_SHORT = {UPLINK: "ul", DOWNLINK: "dl"}


def forest_trainer(params: ForestParams | None = None, seed: int = 0):
    """Trainer producing a rate forest; usable with :func:`sweep_cell_width`."""
    def train(features, rates):
        model = fit_rate_forest(features, rates, params, seed)
        return lambda test: model.predict(encode(test, model.vocab))
    return train




@dataclass
class SweepResult:
    cell_widths: list
    miss_ratio: list = field(default_factory=list)
    layer_rmse: dict = field(default_factory=dict)
    layer_mae: dict = field(default_factory=dict)
    cell_id_mismatch: list = field(default_factory=list)
    rate_rmse: dict = field(default_factory=dict)
    rate_mae: dict = field(default_factory=dict)
    rate_rmse_std: dict = field(default_factory=dict)
    rate_mae_std: dict = field(default_factory=dict)

    def columns(self) -> list[str]:
        cols = ["cell_width", "miss_ratio"]
        for layer in self.layer_rmse:
            cols += [f"{layer}_rmse", f"{layer}_mae"]
        cols.append("cell_id_mismatch")
        for d in self.rate_rmse:
            s = _SHORT[d]
            cols += [f"rate_{s}_rmse", f"rate_{s}_rmse_std", f"rate_{s}_mae", f"rate_{s}_mae_std"]
        return cols

    def rows(self) -> list[dict]:
        out = []
        for k, c in enumerate(self.cell_widths):
            row = {"cell_width": c, "miss_ratio": self.miss_ratio[k]}
            for layer in self.layer_rmse:
                row[f"{layer}_rmse"] = self.layer_rmse[layer][k]
                row[f"{layer}_mae"] = self.layer_mae[layer][k]
            row["cell_id_mismatch"] = self.cell_id_mismatch[k]
            for d in self.rate_rmse:
                s = _SHORT[d]
                row[f"rate_{s}_rmse"] = self.rate_rmse[d][k]
                row[f"rate_{s}_rmse_std"] = self.rate_rmse_std[d][k]
                row[f"rate_{s}_mae"] = self.rate_mae[d][k]
                row[f"rate_{s}_mae_std"] = self.rate_mae_std[d][k]
            out.append(row)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, self.columns(), lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows())
        return buf.getvalue()

    def to_dict(self) -> dict:
        return asdict(self)


def sweep_cell_width(samples, widths, trainer=None, seed: int = 0, k: int = 10,
                     directions=(UPLINK, DOWNLINK), probe_positions=None,
                     layers=NUMERIC_LAYERS) -> SweepResult:
    """Evaluate the REM pipeline for each cell width.

    For every fold the map is built from the training samples only. Lookup
    errors and the cell-id mismatch rate are measured at the held-out samples;
    the miss ratio at ``probe_positions`` when given, else at the held-out
    positions. For each direction a rate model is trained on REM-looked-up
    features of the training samples and scored on those of the held-out ones.
    All values are fold means; rate errors also carry the fold std.
    """
    widths = [float(c) for c in widths]
    if not widths:
        raise ValueError("no cell widths given")
    if any(b < a for a, b in zip(widths, widths[1:])):
        raise ValueError("cell widths must be sorted ascending")
    trainer = trainer or forest_trainer(seed=seed)
    directions = [normalize_direction(d) for d in directions]
    samples = list(samples)
    folds = kfold_indices(len(samples), k, seed)

    res = SweepResult(widths)
    res.layer_rmse = {l: [] for l in layers}
    res.layer_mae = {l: [] for l in layers}
    for d in directions:
        res.rate_rmse[d], res.rate_mae[d] = [], []
        res.rate_rmse_std[d], res.rate_mae_std[d] = [], []

    for c in widths:
        misses, mismatch = [], []
        lr = {l: [] for l in layers}
        lm = {l: [] for l in layers}
        rr = {d: [] for d in directions}
        rm = {d: [] for d in directions}
        for held in folds:
            mask = np.ones(len(samples), dtype=bool)
            mask[held] = False
            train = take(samples, np.flatnonzero(mask))
            test = take(samples, held)
            rem = build_rem(train, c)
            positions = probe_positions if probe_positions is not None else [s.position for s in test]
            misses.append(miss_ratio(rem, positions))
            mismatch.append(cell_id_mismatch_rate(rem, test))
            for l in layers:
                e_rmse, e_mae = layer_lookup_error(rem, test, l)
                lr[l].append(e_rmse)
                lm[l].append(e_mae)
            for d in directions:
                tr, te = select_direction(train, d), select_direction(test, d)
                if not tr or not te:
                    continue
                predictor = trainer(rem_features(rem, tr), np.array([s.data_rate for s in tr]))
                pred = predictor(rem_features(rem, te))
                truth = [s.data_rate for s in te]
                rr[d].append(rmse(pred, truth))
                rm[d].append(mae(pred, truth))
        res.miss_ratio.append(float(np.mean(misses)))
        res.cell_id_mismatch.append(float(np.mean(mismatch)))
        for l in layers:
            res.layer_rmse[l].append(float(np.mean(lr[l])))
            res.layer_mae[l].append(float(np.mean(lm[l])))
        for d in directions:
            # NaN when no fold had samples of this direction on both sides
            stats = [(np.mean(v), np.std(v)) if v else (np.nan, np.nan) for v in (rr[d], rm[d])]
            res.rate_rmse[d].append(float(stats[0][0]))
            res.rate_rmse_std[d].append(float(stats[0][1]))
            res.rate_mae[d].append(float(stats[1][0]))
            res.rate_mae_std[d].append(float(stats[1][1]))
    return res
