"""Tabular Q-learning with shaped experience replay for risk-averse policies."""

__version__ = "0.1.0"

from .baselines import RiskSensitiveConfig, run_risk_sensitive_q, run_worst_case_q
from .learner import LearnerConfig, RunLog, greedy_policy, run_algorithm1, run_q_learning
from .mdp import GridWorldSpec, TabularMdp, build_env1, build_env2
from .operators import EffectiveModel, apply_h, effective_model, fixed_point
from .replay import BufferStats, SchemeConfig, WeightFunction, limiting_weights, replay_weights
from .safety import RiskProfile, check_assumption1, policy_risk_profile, theorem2_report
from .verify import SUITES, run_suite
