"""
Measurement ingestion, local projection, and a synthetic drive-test campaign.

The synthetic field is the stand-in for a real measurement campaign: path
loss from a set of base stations, one spatially correlated shadowing surface
per station, fixed monotone mappings from received power to the other
indicators, and a known data-rate function. Because the rate function is
known, learned models can be judged against it.

Indicator mappings (all piecewise linear, monotone):

* ``sinr = clip(rsrp - noise_floor, -10, 30)`` dB
* ``rsrq = interp(rsrp, [-130, -70], [-20, -5])`` dB
* ``cqi = round(interp(sinr, [-8, -6, 20], [0, 1, 15]))``
* ``ta = floor(distance_to_server / 78.12 m)`` (LTE timing-advance step)

The achieved rate is ``peak * radio * payload * motion + noise`` with
``radio = w * q + (1 - w)``, ``q = log2(1 + snr) / log2(1 + 10^3)`` on the
noise-free SINR, ``payload = 1 - exp(-bytes / payload_scale)`` and
``motion = 1 - velocity / 100``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import mobility
from .geo_rem import DOWNLINK, UPLINK, MeasurementSample, normalize_direction

EARTH_RADIUS = 6_378_137.0  # m, WGS84 equatorial
TA_STEP = 78.12  # m per timing-advance unit
CSV_COLUMNS = ("x", "y", "t", "rsrp", "rsrq", "sinr", "cqi", "ta", "velocity",
               "cell_id", "payload", "data_rate", "direction")
_DIRECTION_CODES = {UPLINK: "ul", DOWNLINK: "dl"}


# -- projection ------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    lat0: float
    lon0: float


def project(lat: float, lon: float, frame: Frame) -> tuple[float, float]:
    """Equirectangular projection to meters east/north of the frame centroid."""
    x = EARTH_RADIUS * math.radians(lon - frame.lon0) * math.cos(math.radians(frame.lat0))
    y = EARTH_RADIUS * math.radians(lat - frame.lat0)
    return x, y


def unproject(x: float, y: float, frame: Frame) -> tuple[float, float]:
    lat = frame.lat0 + math.degrees(y / EARTH_RADIUS)
    lon = frame.lon0 + math.degrees(x / (EARTH_RADIUS * math.cos(math.radians(frame.lat0))))
    return lat, lon


# -- synthetic field -------------------------------------------------------

@dataclass(frozen=True)
class BaseStation:
    cell_id: int
    x: float
    y: float
    tx_power_dbm: float = 15.0  # per resource element


@dataclass(frozen=True)
class RateModel:
    peak: float
    radio_weight: float
    noise_std: float


DEFAULT_RATES = {
    UPLINK: RateModel(peak=15.0, radio_weight=1.0, noise_std=0.8),
    DOWNLINK: RateModel(peak=30.0, radio_weight=0.6, noise_std=2.0),
}


class ShadowingSurface:
    """Zero-mean Gaussian surface with correlation ``exp(-(d / L)^2)``.

    White noise on a regular grid is smoothed with a Gaussian kernel of
    standard deviation L/2, rescaled to ``sigma_db`` and read back with
    bilinear interpolation.
    """

    def __init__(self, bounds, sigma_db, correlation_length, spacing, rng):
        if not correlation_length > 0:
            raise ValueError("correlation length must be positive")
        x0, y0, x1, y1 = bounds
        pad = 2 * correlation_length
        self.x0, self.y0 = x0 - pad, y0 - pad
        self.spacing = float(spacing)
        nx = int(math.ceil((x1 - x0 + 2 * pad) / spacing)) + 1
        ny = int(math.ceil((y1 - y0 + 2 * pad) / spacing)) + 1
        white = rng.standard_normal((nx, ny))
        if sigma_db > 0:
            smooth = ndimage.gaussian_filter(white, correlation_length / 2 / spacing, mode="wrap")
            self.grid = smooth * (sigma_db / smooth.std())
        else:
            self.grid = np.zeros((nx, ny))

    def __call__(self, x, y):
        gx = (np.asarray(x, dtype=float) - self.x0) / self.spacing
        gy = (np.asarray(y, dtype=float) - self.y0) / self.spacing
        coords = np.vstack([np.ravel(gx), np.ravel(gy)])
        out = ndimage.map_coordinates(self.grid, coords, order=1, mode="nearest")
        return out.reshape(np.shape(gx))


@dataclass
class SyntheticField:
    base_stations: Sequence[BaseStation]
    bounds: tuple[float, float, float, float]
    pathloss_exponent: float = 3.0
    pathloss_ref_db: float = 38.5  # at 1 m
    noise_floor_dbm: float = -110.0
    shadowing_sigma_db: float = 8.0
    correlation_length: float = 60.0
    grid_spacing: float = 10.0
    measurement_noise_db: dict = field(
        default_factory=lambda: {"rsrp": 4.0, "rsrq": 1.5, "sinr": 4.0})
    payload_scale: float = 500_000.0
    rates: dict = field(default_factory=lambda: dict(DEFAULT_RATES))
    seed: int = 0

    def __post_init__(self):
        if not self.base_stations:
            raise ValueError("field needs at least one base station")
        streams = np.random.SeedSequence(self.seed).spawn(len(self.base_stations))
        self._shadowing = [
            ShadowingSurface(self.bounds, self.shadowing_sigma_db, self.correlation_length,
                             self.grid_spacing, np.random.default_rng(s))
            for s in streams
        ]

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticField":
        d = dict(d)
        d["base_stations"] = [BaseStation(**b) for b in d["base_stations"]]
        d["bounds"] = tuple(d["bounds"])
        if "rates" in d:
            rates = dict(DEFAULT_RATES)
            for k, v in d["rates"].items():
                rates[normalize_direction(k)] = RateModel(**v)
            d["rates"] = rates
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SyntheticField":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    # ground truth, noise free
    def rsrp_all(self, x: float, y: float) -> np.ndarray:
        out = np.empty(len(self.base_stations))
        for k, (bs, shadow) in enumerate(zip(self.base_stations, self._shadowing)):
            d = max(math.hypot(x - bs.x, y - bs.y), 1.0)
            pl = self.pathloss_ref_db + 10 * self.pathloss_exponent * math.log10(d)
            out[k] = bs.tx_power_dbm - pl - float(shadow(x, y))
        return out

    def truth(self, x: float, y: float) -> dict:
        """Noise-free indicators at a position, served by the strongest station."""
        rsrp = self.rsrp_all(x, y)
        k = int(np.argmax(rsrp))
        bs = self.base_stations[k]
        sinr = sinr_from_rsrp(rsrp[k], self.noise_floor_dbm)
        return {
            "rsrp": float(rsrp[k]),
            "rsrq": rsrq_from_rsrp(rsrp[k]),
            "sinr": sinr,
            "cqi": cqi_from_sinr(sinr),
            "ta": int(math.hypot(x - bs.x, y - bs.y) // TA_STEP),
            "cell_id": bs.cell_id,
        }

    def expected_rate(self, sinr: float, payload: float, velocity: float, direction) -> float:
        """Noise-free data rate in MBit/s: the oracle the learners approximate."""
        m = self.rates[normalize_direction(direction)]
        q = min(max(math.log2(1 + 10 ** (sinr / 10)) / math.log2(1 + 1e3), 0.0), 1.0)
        radio = m.radio_weight * q + (1 - m.radio_weight)
        size = 1 - math.exp(-payload / self.payload_scale)
        motion = max(1 - velocity / 100.0, 0.0)
        return m.peak * radio * size * motion

    def measure(self, x, y, velocity, payload, direction, rng) -> tuple[dict, float]:
        """Noisy indicators as a UE would report them, plus an achieved rate."""
        true = self.truth(x, y)
        noise = self.measurement_noise_db
        rsrp = true["rsrp"] + rng.normal(0, noise.get("rsrp", 0.0))
        rsrq = true["rsrq"] + rng.normal(0, noise.get("rsrq", 0.0))
        sinr = true["sinr"] + rng.normal(0, noise.get("sinr", 0.0))
        meas = {
            "rsrp": float(rsrp), "rsrq": float(rsrq), "sinr": float(sinr),
            "cqi": cqi_from_sinr(sinr), "ta": true["ta"], "cell_id": true["cell_id"],
        }
        m = self.rates[normalize_direction(direction)]
        rate = self.expected_rate(true["sinr"], payload, velocity, direction)
        rate = max(rate + rng.normal(0, m.noise_std), 0.0)
        return meas, rate


def sinr_from_rsrp(rsrp: float, noise_floor_dbm: float) -> float:
    return float(min(max(rsrp - noise_floor_dbm, -10.0), 30.0))


def rsrq_from_rsrp(rsrp: float) -> float:
    return float(np.interp(rsrp, [-130.0, -70.0], [-20.0, -5.0]))


def cqi_from_sinr(sinr: float) -> int:
    return int(round(float(np.interp(sinr, [-8.0, -6.0, 20.0], [0.0, 1.0, 15.0]))))


# -- campaign --------------------------------------------------------------

def generate_campaign(
    field: SyntheticField,
    network: mobility.RoadNetwork,
    trips,
    sampling_rate: float = 1.0,
    seed: int = 0,
    dt: float = 0.1,
    payload_range=(10_000, 3_000_000),
    position_noise: float = 0.0,
) -> list[MeasurementSample]:
    """Drive every trip and record one measurement per sampling period.

    Payloads are log-uniform over ``payload_range`` bytes; successive samples
    alternate between uplink and downlink. ``position_noise`` is the std (m)
    of the GPS error added to recorded positions; radio values are always
    taken at the true position.
    """
    if not sampling_rate > 0:
        raise ValueError("sampling rate must be positive")
    every = max(1, round(1.0 / (sampling_rate * dt)))
    rng = np.random.default_rng(seed)
    lo, hi = math.log(payload_range[0]), math.log(payload_range[1])
    samples = []
    t0 = 0.0
    for trip in trips:
        route = mobility.shortest_path(network, trip[0], trip[1])
        if route is None:
            raise mobility.NetworkError(f"trip {trip!r} is not routable")
        state = mobility.start_state(network, route, trip[0])
        k = 0
        while True:
            if k % every == 0:
                x, y = state.position
                payload = int(math.exp(rng.uniform(lo, hi)))
                direction = UPLINK if len(samples) % 2 == 0 else DOWNLINK
                meas, rate = field.measure(x, y, state.velocity, payload, direction, rng)
                if position_noise > 0:
                    x, y = x + rng.normal(0, position_noise), y + rng.normal(0, position_noise)
                samples.append(MeasurementSample(
                    x=float(x), y=float(y), t=t0 + k * dt, velocity=state.velocity, payload=payload,
                    data_rate=rate, direction=direction, **meas,
                ))
            if mobility.is_finished(state, network):
                break
            state = mobility.step(state, network, dt)
            k += 1
        t0 += k * dt + 1.0
    return samples


# -- CSV -------------------------------------------------------------------

class CampaignFormatError(ValueError):
    pass


def save_campaign(samples, path, provenance: dict | None = None):
    with open(path, "w", newline="") as fh:
        if provenance is not None:
            fh.write("# " + json.dumps(provenance, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for s in samples:
            w.writerow([repr(float(s.x)), repr(float(s.y)), repr(float(s.t)),
                        repr(float(s.rsrp)), repr(float(s.rsrq)), repr(float(s.sinr)),
                        s.cqi, s.ta, repr(float(s.velocity)), s.cell_id, s.payload,
                        repr(float(s.data_rate)), _DIRECTION_CODES[s.direction]])


def read_provenance(path) -> dict | None:
    with open(path) as fh:
        first = fh.readline()
    return json.loads(first[2:]) if first.startswith("# ") else None


def load_campaign(path) -> list[MeasurementSample]:
    """Parse a measurement CSV; malformed rows raise with their line number."""
    samples = []
    with open(path, newline="") as fh:
        lines = [(n, line) for n, line in enumerate(fh, 1) if not line.startswith("#")]
    if not lines:
        raise CampaignFormatError(f"{path}: empty file")
    reader = csv.reader(line for _, line in lines)
    header = next(reader)
    if tuple(h.strip() for h in header) != CSV_COLUMNS:
        raise CampaignFormatError(
            f"{path}:{lines[0][0]}: expected header {','.join(CSV_COLUMNS)}")
    for (lineno, _), row in zip(lines[1:], reader):
        if not row:
            continue
        if len(row) != len(CSV_COLUMNS):
            raise CampaignFormatError(
                f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        try:
            r = dict(zip(CSV_COLUMNS, row))
            samples.append(MeasurementSample(
                x=float(r["x"]), y=float(r["y"]), t=float(r["t"]),
                rsrp=float(r["rsrp"]), rsrq=float(r["rsrq"]), sinr=float(r["sinr"]),
                cqi=int(r["cqi"]), ta=int(r["ta"]), velocity=float(r["velocity"]),
                cell_id=int(r["cell_id"]), payload=int(r["payload"]),
                data_rate=float(r["data_rate"]), direction=r["direction"],
            ))
        except ValueError as exc:
            raise CampaignFormatError(f"{path}:{lineno}: {exc}") from exc
    if not samples:
        raise CampaignFormatError(f"{path}: no measurement rows")
    return samples
