"""Multi-agent manufacturing control with capability exploration.

Resource agents (robots, machines) own finite-state capability models,
product agents bid for routes through them, and a central controller
reassigns a broken agent's events to a suitable substitute.
"""

from .engine import RunMetrics, Simulation, run, summarize
from .scenario import Scenario, load_scenario, save_scenario

__all__ = ["RunMetrics", "Scenario", "Simulation", "load_scenario", "run", "save_scenario",
           "summarize"]
__version__ = "0.1.0"
