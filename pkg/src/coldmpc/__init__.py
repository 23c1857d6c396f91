"""Model predictive energy management of an electric vehicle in cold weather.

The package couples plant models (longitudinal vehicle, cabin air,
R134a heat-pump cycle, equivalent-circuit battery with a lumped thermal
model), the lower-level proportional controllers, and a system-level
receding-horizon controller that splits battery power between propulsion,
cabin heating and battery preconditioning.
"""

from .config import ScenarioConfig, load as load_config
from .errors import ColdMpcError
from .harness import SimSummary, SimTrace, emit_outputs, run, settle_time
from .mpc import (HorizonSolution, HvacSurrogate, MpcBounds, MpcConfig, MpcDecision, MpcState, PredictionModel,
                  RecedingController, fit_hvac_surrogate, predict_dynamics, solve_horizon)

__version__ = "0.1.0"

__all__ = [
    "ColdMpcError", "HorizonSolution", "HvacSurrogate", "MpcBounds", "MpcConfig", "MpcDecision", "MpcState",
    "PredictionModel", "RecedingController", "ScenarioConfig", "SimSummary", "SimTrace", "emit_outputs",
    "fit_hvac_surrogate", "load_config", "predict_dynamics", "run", "settle_time", "solve_horizon",
]
