"""Iterative trajectory planning, partial feedback linearization and
Gaussian-process model learning for an underactuated Pendubot."""
from .config import ConfigError, ScenarioConfig, parse_config, parse_text
from .controller import BalanceController, Mode, TrackingGains, lqr_design, supervisor_step
from .dynamics import (DynamicsError, PerturbationSpec, RobotParams, State, forward_dynamics,
                       pendubot_default, perturb, rk4_step)
from .gp import GPModel, GPStack, Hyperparams
from .learnloop import (LearningConfig, Report, Session, SimulationConfig, run_iteration,
                        run_until_converged)
from .pfl import pfl_torque, residual_active, residual_passive
from .planner import OCPSpec, ReferenceTrajectory, TerminalBox, solve_ocp

__version__ = "0.1.0"

__all__ = [
    "BalanceController", "ConfigError", "DynamicsError", "GPModel", "GPStack", "Hyperparams",
    "LearningConfig", "Mode", "OCPSpec", "PerturbationSpec", "ReferenceTrajectory", "Report",
    "RobotParams", "ScenarioConfig", "Session", "SimulationConfig", "State", "TerminalBox",
    "TrackingGains", "forward_dynamics", "lqr_design", "parse_config", "parse_text",
    "pendubot_default", "perturb", "pfl_torque", "residual_active", "residual_passive",
    "rk4_step", "run_iteration", "run_until_converged", "solve_ocp", "supervisor_step",
]
