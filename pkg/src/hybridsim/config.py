"""Experiment configuration files.

One JSON document describes a whole experiment; paths inside it are
resolved relative to the file. See ``data/scenario.json`` for the shipped
example.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .learners import ForestParams
from .mobility import RoadNetwork
from .scenario_io import SyntheticField
from .sim_engine import Scenario, SchemeConfig, SCHEME_KINDS

REQUIRED = {
    "network": str,
    "field": (str, dict),
    "campaign": dict,
    "trip": dict,
}


class ConfigError(ValueError):
    pass


def default_config_path() -> Path:
    return Path(str(resources.files("hybridsim") / "data" / "scenario.json"))


def _get(d: dict, dotted: str, types, where, default=...):
    cur = d
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if default is not ...:
                return default
            raise ConfigError(f"{where}: missing field '{dotted}'")
        cur = cur[part]
    if types is not None and not isinstance(cur, types):
        raise ConfigError(f"{where}: field '{dotted}' has wrong type {type(cur).__name__}")
    return cur


@dataclass
class ExperimentConfig:
    path: Path
    raw: dict

    @classmethod
    def load(cls, path=None) -> "ExperimentConfig":
        path = Path(path) if path is not None else default_config_path()
        if not path.exists():
            raise ConfigError(f"{path}: config file not found")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        for key, types in REQUIRED.items():
            _get(raw, key, types, path)
        _get(raw, "campaign.trips", list, path)
        _get(raw, "trip.waypoints", list, path)
        for name, spec in raw.get("schemes", {}).items():
            kind = spec.get("kind") if isinstance(spec, dict) else None
            if kind not in SCHEME_KINDS:
                raise ConfigError(f"{path}: field 'schemes.{name}.kind' must be one of {SCHEME_KINDS}")
        return cls(path, raw)

    def _resolve(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.path.parent / p

    def get(self, dotted, default=None):
        return _get(self.raw, dotted, None, self.path, default)

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def direction(self) -> str:
        return self.raw.get("direction", "ul")

    def network(self) -> RoadNetwork:
        p = self._resolve(self.raw["network"])
        if not p.exists():
            raise ConfigError(f"{self.path}: field 'network' points to missing file {p}")
        return RoadNetwork.load(p)

    def field(self) -> SyntheticField:
        spec = self.raw["field"]
        if isinstance(spec, dict):
            return SyntheticField.from_dict(spec)
        p = self._resolve(spec)
        if not p.exists():
            raise ConfigError(f"{self.path}: field 'field' points to missing file {p}")
        try:
            return SyntheticField.load(p)
        except TypeError as exc:
            raise ConfigError(f"{p}: {exc}") from exc

    def campaign_trips(self) -> list:
        c = self.raw["campaign"]
        return [tuple(t) for t in c["trips"]] * int(c.get("passes", 1))

    def forest_params(self, section="forest") -> ForestParams:
        try:
            return ForestParams(**self.raw.get(section, {}))
        except TypeError as exc:
            raise ConfigError(f"{self.path}: field '{section}': {exc}") from exc

    def scenario(self, network=None, duration=..., direction=None) -> Scenario:
        trip = self.raw["trip"]
        return Scenario(
            network or self.network(),
            list(trip["waypoints"]),
            duration=trip.get("duration") if duration is ... else duration,
            loop=bool(trip.get("loop", False)),
            dt=float(trip.get("dt", 0.1)),
            generation_rate=int(self.get("sensor.generation_rate", 50_000)),
            direction=direction or self.direction,
        )

    def schemes(self, direction=None, only=None) -> dict:
        specs = self.raw.get("schemes") or {k: {"kind": k} for k in SCHEME_KINDS}
        out = {}
        for name, spec in specs.items():
            if only and name not in only and spec["kind"] not in only:
                continue
            spec = dict(spec)
            kind = spec.pop("kind")
            try:
                out[name] = SchemeConfig.default(kind, direction or self.direction,
                                                 name=name, **spec)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{self.path}: field 'schemes.{name}': {exc}") from exc
        return out
