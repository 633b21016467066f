"""LOS-based relative attitude formation control on SO(3)."""

from .graph import FormationSpec, chain_order, validate
from .scenario import Scenario, ScenarioError, load_scenario, paper_scenario, scenario_from_dict
from .sim import DivergenceError, RunResult, run

__version__ = "0.1.0"

__all__ = ["FormationSpec", "chain_order", "validate", "Scenario", "ScenarioError", "load_scenario",
           "paper_scenario", "scenario_from_dict", "DivergenceError", "RunResult", "run"]
