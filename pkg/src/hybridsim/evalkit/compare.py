from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import wasserstein_distance


@dataclass(frozen=True)
class ModelingError:
    relative_mean_error: float
    wasserstein: float

    def to_dict(self) -> dict:
        return asdict(self)


def aggregated_modeling_error(sim, reference) -> ModelingError:
    """How far a simulated rate distribution is from the reference one.

    Reports ``|mean(sim) - mean(ref)| / mean(ref)`` together with the
    Wasserstein-1 distance between the two empirical distributions.
    """
    sim = np.asarray(sim, dtype=float).ravel()
    ref = np.asarray(reference, dtype=float).ravel()
    if sim.size == 0 or ref.size == 0:
        raise ValueError("both distributions must be non-empty")
    ref_mean = ref.mean()
    if ref_mean == 0:
        raise ValueError("reference mean is zero; relative error undefined")
    return ModelingError(
        float(abs(sim.mean() - ref_mean) / abs(ref_mean)),
        float(wasserstein_distance(sim, ref)),
    )
