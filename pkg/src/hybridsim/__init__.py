"""Hybrid data-driven network simulation for vehicular sensor uploads."""
__version__ = "0.1.0"

from .geo_rem import MeasurementSample, Rem, build_rem, lookup
from .mobility import RoadNetwork, shortest_path, step
from .sim_engine import Scenario, SchemeConfig, run_batch, run_simulation

__all__ = [
    "MeasurementSample", "Rem", "build_rem", "lookup", "RoadNetwork", "shortest_path", "step",
    "Scenario", "SchemeConfig", "run_batch", "run_simulation", "__version__",
]
