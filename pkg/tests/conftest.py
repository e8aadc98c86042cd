import math

import numpy as np
import pytest

from hybridsim.config import ExperimentConfig
from hybridsim.geo_rem import NUMERIC_LAYERS, MeasurementSample
from hybridsim.scenario_io import generate_campaign


def make_sample(x, y, rsrp=-90.0, cell_id=1, **kw):
    base = dict(t=0.0, rsrq=-10.0, sinr=10.0, cqi=7, ta=1, velocity=10.0,
                payload=100_000, data_rate=5.0, direction="ul")
    base.update(kw)
    return MeasurementSample(x=x, y=y, rsrp=rsrp, cell_id=cell_id, **base)


def random_samples(n, seed, extent=500.0, n_cells=4):
    rng = np.random.default_rng(seed)
    return [
        make_sample(float(x), float(y), rsrp=float(r), cell_id=int(c), sinr=float(s),
                    cqi=int(q), ta=int(ta))
        for x, y, r, c, s, q, ta in zip(
            rng.uniform(0, extent, n), rng.uniform(0, extent, n), rng.normal(-90, 8, n),
            rng.integers(1, n_cells + 1, n), rng.normal(10, 5, n), rng.integers(0, 16, n),
            rng.integers(0, 10, n))
    ]


def brute_lookup(samples, origin, c, p):
    """Re-derive the owning cell of every sample and aggregate by hand."""
    key = (math.floor((p[0] - origin[0]) / c), math.floor((p[1] - origin[1]) / c))
    members = [s for s in samples
               if (math.floor((s.x - origin[0]) / c), math.floor((s.y - origin[1]) / c)) == key]
    if not members:
        return None
    out = {}
    for name in NUMERIC_LAYERS:
        acc = 0.0
        for s in members:
            acc += float(getattr(s, name))
        out[name] = acc / len(members)
    counts = {}
    for s in members:
        counts[s.cell_id] = counts.get(s.cell_id, 0) + 1
    top = max(counts.values())
    out["cell_id"] = min(k for k, v in counts.items() if v == top)
    return out


@pytest.fixture(scope="session")
def shipped_config():
    return ExperimentConfig.load()


@pytest.fixture(scope="session")
def shipped_campaign(shipped_config):
    camp = shipped_config.raw["campaign"]
    return generate_campaign(
        shipped_config.field(), shipped_config.network(), shipped_config.campaign_trips(),
        sampling_rate=camp["sampling_rate"], seed=camp["seed"],
        position_noise=camp["position_noise"],
    )
