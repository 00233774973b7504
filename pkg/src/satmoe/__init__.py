"""Deterministic simulator for distributed mixture-of-experts inference
over LEO satellite constellations."""

__version__ = "0.1.0"

from .constellation import IslPolicy, SatelliteId, TopologySnapshot, WalkerShell
from .engine import RunMetrics, RunResult, Scenario, compare, dispatch, run
from .moe import GatingScores, MoEModelSpec, SkewSpec, gate_topk
from .placement import PlacementEval, PlacementMap
from .power import BatteryState, PowerProfile
from .selection import SelectionOutcome, SelectionPolicy
from .thermal import ThermalSpec, ThermalState

__all__ = [
    "BatteryState",
    "GatingScores",
    "IslPolicy",
    "MoEModelSpec",
    "PlacementEval",
    "PlacementMap",
    "PowerProfile",
    "RunMetrics",
    "RunResult",
    "SatelliteId",
    "Scenario",
    "SelectionOutcome",
    "SelectionPolicy",
    "SkewSpec",
    "ThermalSpec",
    "ThermalState",
    "TopologySnapshot",
    "WalkerShell",
    "compare",
    "dispatch",
    "gate_topk",
    "run",
]
