"""Scenario engine: load events, measurement noise, co-simulation and traces."""

from .compare import compare_to_oracle
from .engine import GridPhysics, LoadProfile, ScenarioTrace, draw_taus, run_scenario
from .noise import NoiseStreams, sample_measurement
from .scenario import (NoiseModel, RampLoads, Scenario, ScenarioError, SetLoad, ShedLoads,
                       TauFixed, TauUniform, bundled_scenario, load_scenario, scenario_from_dict)

__all__ = [
    "GridPhysics", "LoadProfile", "NoiseModel", "NoiseStreams", "RampLoads", "Scenario",
    "ScenarioError", "ScenarioTrace", "SetLoad", "ShedLoads", "TauFixed", "TauUniform",
    "bundled_scenario", "compare_to_oracle", "draw_taus", "load_scenario", "run_scenario",
    "sample_measurement", "scenario_from_dict",
]
