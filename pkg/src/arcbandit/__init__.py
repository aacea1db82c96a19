"""Bayesian bandits with the asymptotic randomised control (ARC) index."""

from ._backend import BACKEND
from .arc import (ArcConfig, ArcIndex, RewardEval, arc_index, arc_index_step, arc_step,
                  learning_premium, learning_premium_info_arm, learning_premium_linear,
                  predictive_reward)
from .belief import (ArmSet, BetaBelief, CountArmModel, GammaBelief, GaussianArmModel,
                     GaussianBelief, Reward)
from .envs import EnvironmentSpec, Observation
from .errors import ConfigError, ConvergenceError, InvalidArgument, NumericError
from .harness import ExperimentConfig, RegretTrace, emit_plot_data, run_episode, run_experiment
from .smoothmax import SmoothMaxKind

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ArcConfig", "ArcIndex", "RewardEval", "arc_index", "arc_index_step",
    "arc_step", "learning_premium", "learning_premium_info_arm", "learning_premium_linear",
    "predictive_reward", "ArmSet", "BetaBelief", "CountArmModel", "GammaBelief",
    "GaussianArmModel", "GaussianBelief", "Reward", "EnvironmentSpec", "Observation",
    "ConfigError", "ConvergenceError", "InvalidArgument", "NumericError",
    "ExperimentConfig", "RegretTrace", "emit_plot_data", "run_episode", "run_experiment",
    "SmoothMaxKind",
]
