"""Hybrid stochastic game for switching controller/estimator/detector subsystems under sensor attacks."""

import os as _os

# thread caps only take effect if set before numpy is first imported
if _os.environ.get("SECURE_GAME_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["SECURE_GAME_THREADS"])

from .control import (  # noqa: E402
    KalmanFilter,
    LqgWeights,
    PlantModel,
    discretize_zoh,
    kalman_gain,
    lqr_gain,
    solve_dare,
)
from .detection import CyberMode, DetectorSpec, TransitionKernel, chi2_threshold, estimate_transition_kernel  # noqa: E402
from .dynamics import AttackAction, AttackKind, EstimateWindow, Subsystem, step_dynamics  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .game import HybridGame, HybridGameState, MixedStrategyProfile, evaluate_total_payoff  # noqa: E402
from .matrix_game import DEFAULT_BACKEND, GameSolution, solve_zero_sum, solve_zero_sum_reference  # noqa: E402
from .moving_horizon import run_moving_horizon  # noqa: E402
from .scenario import build_scenario, builtin_scenario_path, load_scenario  # noqa: E402
from .suboptimal import robust_value_iteration  # noqa: E402

__version__ = "0.1.0"
