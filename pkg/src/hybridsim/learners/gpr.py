"""
Gaussian-process derivation model.

Maps a predicted data rate to the distribution of the rate actually achieved.
The prior is a constant mean (the target average) plus a squared-exponential
kernel ``sf^2 exp(-(x - x')^2 / (2 l^2))``; observation noise ``sn^2`` is part
of the predictive distribution, so draws from it scatter like real
measurements around the learned trend.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

MAX_POINTS = 2000
CACHE_SIZE = 4096
SEARCH_POINTS = 300
_JITTER_STEPS = (1e-10, 1e-8, 1e-6)


class GprFitError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class GprHyperparams:
    length_scale: float
    signal_std: float
    noise_std: float

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")


def se_kernel(a, b, length_scale: float, signal_std: float) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, 1)
    b = np.asarray(b, dtype=float).reshape(1, -1)
    return signal_std**2 * np.exp(-0.5 * ((a - b) / length_scale) ** 2)


def _factor(x, hp: GprHyperparams):
    K = se_kernel(x, x, hp.length_scale, hp.signal_std)
    K[np.diag_indices_from(K)] += hp.noise_std**2
    scale = hp.signal_std**2 + hp.noise_std**2
    for jitter in _JITTER_STEPS:
        try:
            A = K.copy()
            A[np.diag_indices_from(A)] += jitter * scale
            return cholesky(A, lower=True)
        except np.linalg.LinAlgError:
            continue
    raise GprFitError(
        f"kernel matrix not positive definite for n={len(x)}, {hp} "
        f"even with jitter {_JITTER_STEPS[-1]:g}; duplicate inputs with tiny noise_std?"
    )


def log_marginal_likelihood(x, y, hp: GprHyperparams, prior_mean: float | None = None) -> float:
    """log N(y | m, K + sn^2 I) for the constant prior mean ``m``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = float(np.mean(y)) if prior_mean is None else prior_mean
    L = _factor(x, hp)
    r = y - m
    alpha = cho_solve((L, True), r)
    return float(
        -0.5 * r @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(x) * math.log(2 * math.pi)
    )


def hyperparameter_grid(x, y):
    sx = float(np.std(x)) or 1.0
    sy = float(np.std(y)) or 1.0
    return [
        GprHyperparams(float(l), float(f), float(n))
        for l, f, n in itertools.product(
            sx * np.geomspace(0.1, 10.0, 7),
            sy * np.geomspace(0.1, 3.0, 5),
            sy * np.geomspace(0.01, 1.0, 6),
        )
    ]


def select_hyperparams(x, y, grid=None):
    """Grid point with the highest log marginal likelihood (first one wins ties)."""
    grid = grid if grid is not None else hyperparameter_grid(x, y)
    best, best_ll = None, -np.inf
    for hp in grid:
        try:
            ll = log_marginal_likelihood(x, y, hp)
        except GprFitError:
            continue
        if ll > best_ll:
            best, best_ll = hp, ll
    if best is None:
        raise GprFitError("no hyperparameter candidate produced a usable kernel")
    return best, best_ll


class GprModel:
    def __init__(self, inputs, targets, hyperparams: GprHyperparams, prior_mean=None):
        self.inputs = np.asarray(inputs, dtype=float).ravel()
        self.targets = np.asarray(targets, dtype=float).ravel()
        self.hyperparams = hyperparams
        self.prior_mean = float(np.mean(self.targets)) if prior_mean is None else float(prior_mean)
        self._chol = _factor(self.inputs, hyperparams)
        self._alpha = cho_solve((self._chol, True), self.targets - self.prior_mean)
        # scalar queries repeat a lot during simulation; each costs O(n^2)
        self._cache = OrderedDict()

    @property
    def prior_variance(self) -> float:
        hp = self.hyperparams
        return hp.signal_std**2 + hp.noise_std**2

    def posterior(self, s_pred):
        """Predictive (mean, std) at one or many predicted rates."""
        if np.ndim(s_pred) == 0:
            key = float(s_pred)
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
            mean, std = self._posterior(np.array([key]))
            hit = self._cache[key] = (float(mean[0]), float(std[0]))
            if len(self._cache) > CACHE_SIZE:
                self._cache.popitem(last=False)
            return hit
        return self._posterior(np.atleast_1d(np.asarray(s_pred, dtype=float)))

    def _posterior(self, q):
        hp = self.hyperparams
        k = se_kernel(self.inputs, q, hp.length_scale, hp.signal_std)
        mean = self.prior_mean + k.T @ self._alpha
        v = solve_triangular(self._chol, k, lower=True)
        var = np.maximum(self.prior_variance - (v * v).sum(axis=0), 0.0)
        return mean, np.sqrt(var)

    def to_dict(self) -> dict:
        return {
            "inputs": self.inputs.tolist(),
            "targets": self.targets.tolist(),
            "hyperparams": asdict(self.hyperparams),
            "prior_mean": self.prior_mean,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GprModel":
        return cls(d["inputs"], d["targets"], GprHyperparams(**d["hyperparams"]), d["prior_mean"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "GprModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def train_gpr(pairs, hyperparams: GprHyperparams | str | None = "auto",
              max_points: int = MAX_POINTS, seed: int = 0) -> GprModel:
    """Fit the derivation model on (predicted, measured) rate pairs.

    More than ``max_points`` pairs are subsampled uniformly. With
    ``hyperparams="auto"`` the hyperparameters maximize the log marginal
    likelihood over a log-spaced grid, searched on at most 300 of the pairs.
    """
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if len(pairs) < 5:
        raise ValueError(f"need at least 5 (predicted, measured) pairs, got {len(pairs)}")
    if not np.all(np.isfinite(pairs)):
        raise ValueError("pairs must be finite")
    rng = np.random.default_rng(seed)
    if len(pairs) > max_points:
        pairs = pairs[np.sort(rng.choice(len(pairs), max_points, replace=False))]
    x, y = pairs[:, 0], pairs[:, 1]
    if hyperparams is None or hyperparams == "auto":
        if len(x) > SEARCH_POINTS:
            sub = np.sort(rng.choice(len(x), SEARCH_POINTS, replace=False))
            hyperparams, _ = select_hyperparams(x[sub], y[sub])
        else:
            hyperparams, _ = select_hyperparams(x, y)
    return GprModel(x, y, hyperparams)


def posterior(model: GprModel, s_pred: float):
    return model.posterior(s_pred)


def draw_clamped_normal(mean: float, std: float, rng: np.random.Generator) -> float:
    return max(float(rng.normal(mean, std)), 0.0)


def sample_virtual_ground_truth(model: GprModel, s_pred: float, rng: np.random.Generator) -> float:
    """One achieved-rate draw for a predicted rate, clamped at zero."""
    mean, std = model.posterior(s_pred)
    return draw_clamped_normal(mean, std, rng)
