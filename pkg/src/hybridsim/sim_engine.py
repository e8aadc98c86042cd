"""
Hybrid simulation loop for opportunistic sensor-data upload.

A vehicle follows a routed trip on a fixed 0.1 s mobility clock while a
sensor fills a buffer at a constant byte rate. On a 1 s probe grid the
transmission scheme decides whether to flush the whole buffer. A flush looks
the network context up in the REM at the vehicle position, predicts the data
rate with the forest and draws the achieved rate from the derivation model.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import mobility
from .geo_rem import DOWNLINK, UPLINK, Rem, lookup_fast, normalize_direction
from .learners import FeatureVector, ForestModel, GprModel
from .learners.gpr import draw_clamped_normal
from .scenario_io import cqi_from_sinr

PERIODIC, CAT, MLCAT = "periodic", "cat", "mlcat"
SCHEME_KINDS = (PERIODIC, CAT, MLCAT)
GENERATION_RATE = 50_000  # bytes/s
MIN_RATE = 0.01  # MBit/s; slower draws are billed at this rate
RESULT_COLUMNS = ("t_start", "payload", "pred_rate", "achieved_rate", "duration", "miss")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    kind: str
    interval: float = 10.0
    probe_interval: float = 1.0
    metric_min: float = 0.0
    metric_max: float = 30.0
    alpha: float = 1.0
    max_buffer_age: float = 120.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme {self.kind!r}; expected one of {SCHEME_KINDS}")
        if not self.interval > 0 or not self.probe_interval > 0:
            raise ValueError("intervals must be positive")
        if not self.metric_min < self.metric_max:
            raise ValueError("metric_min must be below metric_max")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.name:
            object.__setattr__(self, "name", self.kind)

    @classmethod
    def default(cls, kind: str, direction=UPLINK, **overrides) -> "SchemeConfig":
        """Scheme with the stock metric range: SINR in [0, 30] dB for CAT, the
        predicted rate in [0, 15] (uplink) or [0, 30] (downlink) MBit/s for ML-CAT."""
        base = {}
        if kind == MLCAT:
            base["metric_max"] = 15.0 if normalize_direction(direction) == UPLINK else 30.0
        base.update(overrides)
        return cls(kind, **base)


def transmission_probability(metric: float, cfg: SchemeConfig) -> float:
    x = (metric - cfg.metric_min) / (cfg.metric_max - cfg.metric_min)
    return min(max(x, 0.0), 1.0) ** cfg.alpha


@dataclass
class SchemeState:
    cfg: SchemeConfig
    t_last: float = 0.0


def decide(state: SchemeState, t: float, metric: float | None, rng) -> bool:
    """Whether to transmit at probe time ``t``.

    ``metric`` is the current SINR for CAT and the predicted rate for ML-CAT;
    periodic ignores it. CAT/ML-CAT consume one uniform draw per call. The
    caller moves ``t_last`` once a transmission actually succeeds.
    """
    cfg = state.cfg
    if cfg.kind == PERIODIC:
        return t - state.t_last >= cfg.interval - 1e-9
    return bool(rng.random() < transmission_probability(metric, cfg))


@dataclass(frozen=True)
class TransmissionRecord:
    t_start: float
    payload: int
    features: FeatureVector
    predicted_rate: float
    achieved_rate: float
    duration: float
    rem_miss: bool


def transmission_duration(payload: int, rate: float) -> float:
    return payload * 8 / (max(rate, MIN_RATE) * 1e6)


@dataclass
class SimulationResult:
    records: list
    residual_buffer: int
    generated: int
    sim_duration: float
    wall_time: float
    seed: int
    scheme: str = ""

    @property
    def achieved_rates(self) -> np.ndarray:
        return np.array([r.achieved_rate for r in self.records])

    def to_csv(self, provenance: dict | None = None) -> str:
        buf = io.StringIO()
        if provenance is not None:
            buf.write("# " + json.dumps(provenance, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in self.records:
            w.writerow([repr(r.t_start), r.payload, repr(r.predicted_rate),
                        repr(r.achieved_rate), repr(r.duration), int(r.rem_miss)])
        return buf.getvalue()


# -- channels --------------------------------------------------------------

class DdnsChannel:
    """Network context from the REM, achieved rate from the derivation model."""

    def __init__(self, rem: Rem, forest: ForestModel, gpr: GprModel):
        if forest is None or gpr is None:
            raise SimulationError("simulation needs a trained forest and derivation model")
        self.rem, self.forest, self.gpr = rem, forest, gpr
        self._code = forest.vocab.code

    def context(self, position, rng):
        return lookup_fast(self.rem, position)

    def predict(self, ctx, velocity, payload) -> float:
        row = np.array([ctx["rsrp"], ctx["rsrq"], ctx["sinr"], ctx["cqi"], ctx["ta"],
                        velocity, self._code(ctx["cell_id"]), payload])
        return float(self.forest.predict(row)[0])

    def achieved(self, ctx, position, velocity, payload, predicted, rng) -> float:
        mean, std = self.gpr.posterior(predicted)
        return draw_clamped_normal(mean, std, rng)


class ReferenceChannel:
    """Stand-in for the real world: live noisy measurements and oracle rates
    from a :class:`~hybridsim.scenario_io.SyntheticField`."""

    def __init__(self, field, forest: ForestModel, direction=UPLINK):
        self.field, self.forest = field, forest
        self.direction = normalize_direction(direction)
        self._code = forest.vocab.code

    def context(self, position, rng):
        true = self.field.truth(*position)
        noise = self.field.measurement_noise_db
        sinr = true["sinr"] + rng.normal(0, noise.get("sinr", 0.0))
        ctx = dict(true, rsrp=true["rsrp"] + rng.normal(0, noise.get("rsrp", 0.0)),
                   rsrq=true["rsrq"] + rng.normal(0, noise.get("rsrq", 0.0)),
                   sinr=sinr, cqi=cqi_from_sinr(sinr), _true_sinr=true["sinr"])
        return ctx, False

    predict = DdnsChannel.predict

    def achieved(self, ctx, position, velocity, payload, predicted, rng) -> float:
        rate = self.field.expected_rate(ctx["_true_sinr"], payload, velocity, self.direction)
        return max(rate + rng.normal(0, self.field.rates[self.direction].noise_std), 0.0)


# -- scenario & loop -------------------------------------------------------

@dataclass
class Scenario:
    network: mobility.RoadNetwork
    waypoints: list
    duration: float | None = None
    loop: bool = False
    dt: float = 0.1
    generation_rate: int = GENERATION_RATE
    direction: str = UPLINK

    def __post_init__(self):
        if len(self.waypoints) < 1:
            raise ValueError("scenario needs at least one waypoint")
        if self.loop and self.duration is None:
            raise ValueError("a looping trip needs a duration")
        if self.duration is not None and self.duration < 0:
            raise ValueError("duration must be non-negative")
        self.direction = normalize_direction(self.direction)
        points = list(self.waypoints)
        if self.loop and len(points) > 1 and points[-1] != points[0]:
            points.append(points[0])
        self.route = mobility.plan_route(self.network, points) if len(points) > 1 else []

    @property
    def ticks_per_second(self) -> int:
        tps = round(1.0 / self.dt)
        if abs(tps * self.dt - 1.0) > 1e-9:
            raise ValueError("dt must divide one second")
        return tps


def _simulate(scenario: Scenario, scheme: SchemeConfig, channel, seed: int) -> SimulationResult:
    wall0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    net = scenario.network
    start = scenario.waypoints[0]
    tps = scenario.ticks_per_second
    probe_every = round(scheme.probe_interval * tps)
    if probe_every < 1 or abs(probe_every - scheme.probe_interval * tps) > 1e-9:
        raise ValueError("probe interval must be a multiple of dt")
    n_ticks = None if scenario.duration is None else round(scenario.duration * tps)
    rate = int(scenario.generation_rate)
    dt = scenario.dt

    vehicle = mobility.start_state(net, scenario.route, start)
    sstate = SchemeState(scheme)
    records = []
    buffer = generated = 0
    t_flush = 0.0
    k = 0
    while True:
        if k > 0:
            if scenario.loop and mobility.is_finished(vehicle, net) and scenario.route:
                vehicle = replace(mobility.start_state(net, scenario.route, start),
                                  odometer=vehicle.odometer)
            vehicle = mobility.step(vehicle, net, dt)
            total = rate * k // tps
            buffer += total - generated
            generated = total
        if k % probe_every == 0 and buffer > 0:
            t = k / tps
            ctx = miss = predicted = None
            if scheme.kind == PERIODIC:
                fire = decide(sstate, t, None, rng)
            else:
                ctx, miss = channel.context(vehicle.position, rng)
                if scheme.kind == CAT:
                    metric = ctx["sinr"]
                else:
                    predicted = channel.predict(ctx, vehicle.velocity, buffer)
                    metric = predicted
                fire = decide(sstate, t, metric, rng)
            if not fire and t - t_flush >= scheme.max_buffer_age - 1e-9:
                fire = True  # starvation guard
            if fire:
                if ctx is None:
                    ctx, miss = channel.context(vehicle.position, rng)
                if predicted is None:
                    predicted = channel.predict(ctx, vehicle.velocity, buffer)
                achieved = channel.achieved(
                    ctx, vehicle.position, vehicle.velocity, buffer, predicted, rng)
                if achieved > 0:
                    records.append(TransmissionRecord(
                        t, buffer,
                        FeatureVector.from_context(ctx, vehicle.velocity, buffer),
                        predicted, achieved, transmission_duration(buffer, achieved), miss,
                    ))
                    buffer = 0
                    t_flush = sstate.t_last = t
        if n_ticks is not None:
            if k >= n_ticks:
                break
        elif mobility.is_finished(vehicle, net):
            break
        k += 1
    return SimulationResult(records, buffer, generated, k / tps,
                            time.perf_counter() - wall0, seed, scheme.name)


def run_simulation(scenario: Scenario, scheme: SchemeConfig, models, rem: Rem,
                   seed: int) -> SimulationResult:
    """One seeded hybrid run; ``models`` is a ``(forest, gpr)`` pair."""
    forest, gpr = models
    return _simulate(scenario, scheme, DdnsChannel(rem, forest, gpr), seed)


def run_reference(scenario: Scenario, scheme: SchemeConfig, field, forest: ForestModel,
                  seed: int) -> SimulationResult:
    """Same loop against the synthetic ground truth instead of the learned models."""
    return _simulate(scenario, scheme, ReferenceChannel(field, forest, scenario.direction), seed)


# -- scheme comparison -----------------------------------------------------

@dataclass
class SchemeSummary:
    name: str
    rates: np.ndarray = field(repr=False)
    n_runs: int = 0
    transmissions: int = 0
    mean: float = math.nan
    q1: float = math.nan
    median: float = math.nan
    q3: float = math.nan
    minimum: float = math.nan
    maximum: float = math.nan
    mean_payload: float = math.nan

    @classmethod
    def from_results(cls, name, results) -> "SchemeSummary":
        rates = np.concatenate([r.achieved_rates for r in results]) if results else np.array([])
        payloads = [rec.payload for r in results for rec in r.records]
        s = cls(name, rates, len(results), len(rates))
        if len(rates):
            s.mean = float(rates.mean())
            s.q1, s.median, s.q3 = (float(v) for v in np.percentile(rates, [25, 50, 75]))
            s.minimum, s.maximum = float(rates.min()), float(rates.max())
            s.mean_payload = float(np.mean(payloads))
        return s

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("rates")
        return d


def _run_one(args):
    kind, scenario, scheme, payload, seed = args
    if kind == "reference":
        field, forest = payload
        return run_reference(scenario, scheme, field, forest, seed)
    models, rem = payload
    return run_simulation(scenario, scheme, models, rem, seed)


def run_batch(scenario, schemes, models, rem, n_runs: int, base_seed: int = 0,
              workers: int = 1, reference=None) -> dict:
    """All runs for every scheme: ``{name: [SimulationResult, ...]}``.

    Run ``r`` of every scheme uses seed ``base_seed + r``. With
    ``reference=(field, forest)`` the runs use the ground-truth channel.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    schemes = _named(schemes)
    kind, payload = ("reference", reference) if reference is not None else ("ddns", (models, rem))
    jobs = [(kind, scenario, cfg, payload, base_seed + r)
            for cfg in schemes.values() for r in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    out = {}
    for k, name in enumerate(schemes):
        out[name] = results[k * n_runs:(k + 1) * n_runs]
    return out


def compare_schemes(scenario, schemes, models, rem, n_runs: int, base_seed: int = 0,
                    workers: int = 1) -> dict:
    """Pooled achieved-rate distribution and summary per scheme."""
    batch = run_batch(scenario, schemes, models, rem, n_runs, base_seed, workers)
    return {name: SchemeSummary.from_results(name, res) for name, res in batch.items()}


def _named(schemes) -> dict:
    if isinstance(schemes, dict):
        return dict(schemes)
    out = {}
    for cfg in schemes:
        name = cfg.name
        n = 2
        while name in out:
            name = f"{cfg.name}#{n}"
            n += 1
        out[name] = cfg
    return out
