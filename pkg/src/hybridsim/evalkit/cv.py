from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..metrics import mae, rmse


@dataclass
class ErrorReport:
    """Cross-validated errors: mean over folds plus the per-fold values."""

    rmse: float
    mae: float
    n: int
    fold_rmse: list = field(default_factory=list)
    fold_mae: list = field(default_factory=list)
    rmse_std: float = 0.0
    mae_std: float = 0.0

    @classmethod
    def from_folds(cls, fold_rmse, fold_mae, n) -> "ErrorReport":
        fr, fm = np.asarray(fold_rmse, float), np.asarray(fold_mae, float)
        return cls(float(fr.mean()), float(fm.mean()), int(n), fr.tolist(), fm.tolist(),
                   float(fr.std()), float(fm.std()))

    def to_dict(self) -> dict:
        return asdict(self)


def kfold_indices(n: int, k: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Seeded shuffle split into ``k`` contiguous folds whose sizes differ by at most one."""
    if k < 2:
        raise ValueError(f"need at least 2 folds, got k={k}")
    if k > n:
        raise ValueError(f"cannot make {k} folds from {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


def take(data, idx):
    if isinstance(data, np.ndarray):
        return data[idx]
    return [data[i] for i in idx]


def cross_validate(X, y, k: int = 10, trainer=None, seed: int = 0) -> ErrorReport:
    """k-fold cross validation.

    ``trainer(X_train, y_train)`` must return a callable mapping ``X_test`` to
    predictions. ``X`` may be an array or any indexable sequence.
    """
    if trainer is None:
        raise ValueError("a trainer is required")
    y = np.asarray(y, dtype=float)
    n = len(y)
    if len(X) != n:
        raise ValueError(f"{len(X)} inputs vs {n} targets")
    folds = kfold_indices(n, k, seed)
    fold_rmse, fold_mae = [], []
    for held in folds:
        mask = np.ones(n, dtype=bool)
        mask[held] = False
        train = np.flatnonzero(mask)
        predictor = trainer(take(X, train), y[train])
        pred = predictor(take(X, held))
        fold_rmse.append(rmse(pred, y[held]))
        fold_mae.append(mae(pred, y[held]))
    return ErrorReport.from_folds(fold_rmse, fold_mae, n)
