"""Reinforcement-learned sequential update selection for budget-limited first-order optimization."""

__version__ = "0.1.0"

from .agent import AgentConfig, PolicyTable, QTable, greedy_policy
from .environment import EnvConfig, SUSEnvironment, run_episode
from .estimators import NAGBaseline, SUSOptimizer
from .problem import KappaSpec, ProblemSet, QuadraticProblem, sample_problem_set
from .tuner import NagHyperparams, TunerConfig, tune_baseline
from .updates import ActionSet, UpdateKind, make_action_set

__all__ = [
    "ActionSet",
    "AgentConfig",
    "EnvConfig",
    "KappaSpec",
    "NAGBaseline",
    "NagHyperparams",
    "PolicyTable",
    "ProblemSet",
    "QTable",
    "QuadraticProblem",
    "SUSEnvironment",
    "SUSOptimizer",
    "TunerConfig",
    "UpdateKind",
    "greedy_policy",
    "make_action_set",
    "run_episode",
    "sample_problem_set",
    "tune_baseline",
]
