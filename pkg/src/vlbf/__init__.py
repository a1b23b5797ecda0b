"""Achievability bounds, optimisation and simulation for variable-length codes with bursty feedback."""

__version__ = "0.1.0"

from .bound import BoundResult, FeedbackSchedule, evaluate_theorem1, evaluate_with_epsilons, rate_of
from .channel import Bsc, DomainError, Dmc, binary_entropy, log_binom_pmf, log_binom_tail, select_control_symbols
from .hyptest import TestErrors, TestParams, np_beta_for_epsilon, np_errors_from_params
from .opt import OptProblem, OptResult, inner_gamma_opt, optimize_exhaustive, optimize_stochastic, sweep_rate_curve
from .rcu import MessageCount, rcu_bsc, rcu_general_mc
from .sim import SimConfig, SimReport, check_bound, run_trial, simulate

__all__ = [
    "BoundResult", "Bsc", "Dmc", "DomainError", "FeedbackSchedule", "MessageCount", "OptProblem",
    "OptResult", "SimConfig", "SimReport", "TestErrors", "TestParams", "binary_entropy",
    "check_bound", "evaluate_theorem1", "evaluate_with_epsilons", "inner_gamma_opt",
    "log_binom_pmf", "log_binom_tail", "np_beta_for_epsilon", "np_errors_from_params",
    "optimize_exhaustive", "optimize_stochastic", "rate_of", "rcu_bsc", "rcu_general_mc",
    "run_trial", "select_control_symbols", "simulate", "sweep_rate_curve",
]
