"""Adaptive economic MPC for linear systems with affine parametric uncertainty."""

from .estimator import EstimatorState, choose_gain, lms_update, parametric_error, predict_one_step, project_box
from .linmodel import (
    ConstraintData,
    EconomicCost,
    ParameterBox,
    ParametricLinearModel,
    assemble_A,
    assemble_B,
    check_open_loop_stability,
    regressor,
    step_true,
)
from .mpc import MpcConfig, MpcSolution, build_qp, slack_of, solve_mpc, stage_cost
from .sim import DisturbanceGenerator, ScenarioConfig, SimLog, generate_disturbance, run_closed_loop
from .terminal import TerminalCost, design_Pf, eval_terminal, linear_term, make_terminal_cost, verify_decrease, decrease_terms

__version__ = "0.1.0"
