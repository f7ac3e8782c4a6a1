"""Momentum-based model predictive control for humanoid push recovery.

A linearized centroidal momentum model, contact wrench constraints for two
rectangular feet, a dense-horizon QP transcription solved by an in-house
ADMM solver, a capture-point step trigger, and a rigid-contact simulator.
"""

from .config import ConfigError, ScenarioConfig, load_config
from .contact_constraints import FootParams, SupportPolygon, stance_block, support_polygon
from .cost_builder import CostWeights, build_references, evaluate_cost_direct
from .momentum_model import (
    ContactGeometry,
    ContactWrench,
    MomentumState,
    WrenchPair,
    discretize,
    equilibrium_wrench,
    exact_momentum_rate,
    linearize,
)
from .mpc_controller import ControllerConfig, MpcController, SteppingState, initial_stepping_state
from .qp_solver import QpSolution, QpSolver, SolverSettings, SolveStatus
from .qp_transcription import ChiLayout, QpProblem, transcribe
from .sim_harness import RunLog, run_scenario

__version__ = "0.1.0"
