"""Counterfactual crossing-crash simulation for AEB, V2X partial and two-stage brakes."""

from .brakes import BrakeConfig, BrakeStageConfig, brake_preset
from .engine import SimulationOutcome, run
from .generator import CrossingSpec, generate, generate_corpus
from .perception import SENSOR_SETS, sensor_set
from .scenario import Scenario, load_scenario, save_scenario

__all__ = [
    "BrakeConfig",
    "BrakeStageConfig",
    "CrossingSpec",
    "SENSOR_SETS",
    "Scenario",
    "SimulationOutcome",
    "brake_preset",
    "generate",
    "generate_corpus",
    "load_scenario",
    "run",
    "save_scenario",
    "sensor_set",
]

__version__ = "0.1.0"
