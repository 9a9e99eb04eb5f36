"""Estimator front-end: fit on a training set of problems, predict on unseen ones.

Both estimators follow the scikit-learn conventions (constructor only stores
parameters, ``fit`` returns ``self``, fitted state ends in ``_``), so
``get_params``/``set_params``/``clone`` work as usual. ``X`` is a sequence of
:class:`~susopt.problem.QuadraticProblem`; ``predict`` returns the best
objective value reached within the evaluation budget for each problem.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_problems, seed_from
from .agent import AgentConfig, greedy_policy
from .environment import EnvConfig, EpisodeTrace, SUSEnvironment
from .harness import evaluate_nag, evaluate_policy, relative_improvement, train_agent
from .tuner import NagHyperparams, TunerConfig, run_nag_fixed, tune_baseline
from .updates import ActionSet, make_action_set


class NAGBaseline(BaseEstimator):
    """NAG with exponentially decaying step size, hyperparameters tuned by Nelder-Mead.

    Parameters
    ----------
    K : int
        Evaluation budget per run (the evaluation at ``x1`` included).
    eta1, mu, delta : float
        Starting point of the search; used as-is when ``tune=False``.
    tune : bool
        Run Nelder-Mead in ``fit``; otherwise ``fit`` only validates.
    max_iters, sample_size, aggregation, common_random_numbers :
        Tuner settings, see :class:`~susopt.tuner.TunerConfig`.
    random_state : int or None
        Seed of the per-call instance draws.
    """

    def __init__(self, K=50, eta1=1e-3, mu=0.9, delta=1e-2, tune=True, max_iters=500,
                 sample_size=50, aggregation="mean_log", common_random_numbers=False, random_state=0):
        self.K = K
        self.eta1 = eta1
        self.mu = mu
        self.delta = delta
        self.tune = tune
        self.max_iters = max_iters
        self.sample_size = sample_size
        self.aggregation = aggregation
        self.common_random_numbers = common_random_numbers
        self.random_state = random_state

    def _tuner_config(self) -> TunerConfig:
        return TunerConfig(K=check_positive_int(self.K, "K"), max_iters=self.max_iters,
                           sample_size=self.sample_size, seed=seed_from(self.random_state),
                           aggregation=self.aggregation, common_random_numbers=self.common_random_numbers,
                           x0=(self.eta1, self.mu, self.delta))

    def fit(self, X, y=None):
        problems = check_problems(X)
        start = NagHyperparams(self.eta1, self.mu, self.delta)
        if self.tune:
            res = tune_baseline(problems, self._tuner_config())
            self.hyperparams_ = res.hyperparams
            self.objective_ = res.objective
            self.n_iter_ = res.n_iter
        else:
            self.hyperparams_ = start
            self.objective_ = None
            self.n_iter_ = 0
        self.eta1_, self.mu_, self.delta_ = self.hyperparams_.as_tuple()
        self.n_features_in_ = problems[0].dim
        return self

    def _check_dim(self, problems):
        if problems[0].dim != self.n_features_in_:
            raise ValueError(f"fitted on d={self.n_features_in_}, got d={problems[0].dim}")

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "hyperparams_")
        problems = check_problems(X)
        self._check_dim(problems)
        return np.array([run_nag_fixed(p, self.hyperparams_, self.K).best_y for p in problems])

    def solve(self, problem, target: float | None = None, max_evals: int | None = None):
        """Full run on one problem; see :func:`~susopt.tuner.run_nag_fixed`."""
        check_is_fitted(self, "hyperparams_")
        return run_nag_fixed(problem, self.hyperparams_, self.K, target=target, max_evals=max_evals)

    def score(self, X, y=None) -> float:
        """Negative mean log10 of the reached objective (higher is better)."""
        return -float(np.mean(np.log10(np.maximum(self.predict(X), 1e-300))))


class SUSOptimizer(BaseEstimator):
    """Sequential update selection: a SARSA agent picks the update used at each iteration.

    ``fit`` tunes a :class:`NAGBaseline` on the same problems when the action set
    needs one (``H1``/``H2``) and ``baseline`` is not given, then trains the Q-table
    for ``n_episodes`` episodes. ``predict`` deploys the greedy policy.

    ``action_set`` is ``"H1"``, ``"H2"``, ``"H3"`` or an :class:`ActionSet`;
    ``baseline`` is a fitted :class:`NAGBaseline`, a ``(eta, mu, delta)`` tuple or
    ``None``. Remaining parameters mirror :class:`~susopt.environment.EnvConfig`
    and :class:`~susopt.agent.AgentConfig`.
    """

    def __init__(self, action_set="H1", baseline=None, K=50, m1=10, m2=20, eps0=0.99, alpha0=0.3,
                 gamma=1.0, n_episodes=12800, final_fraction=0.005, reward_kind="difference",
                 use_log_state=True, log_span=8.0, greedy_revert=True, shared_nag_memory=True,
                 tuner_max_iters=500, random_state=0):
        self.action_set = action_set
        self.baseline = baseline
        self.K = K
        self.m1 = m1
        self.m2 = m2
        self.eps0 = eps0
        self.alpha0 = alpha0
        self.gamma = gamma
        self.n_episodes = n_episodes
        self.final_fraction = final_fraction
        self.reward_kind = reward_kind
        self.use_log_state = use_log_state
        self.log_span = log_span
        self.greedy_revert = greedy_revert
        self.shared_nag_memory = shared_nag_memory
        self.tuner_max_iters = tuner_max_iters
        self.random_state = random_state

    @property
    def env_config_(self) -> EnvConfig:
        return EnvConfig(K=self.K, m1=self.m1, m2=self.m2, use_log_state=self.use_log_state,
                         log_span=self.log_span, reward_kind=self.reward_kind,
                         greedy_revert=self.greedy_revert, shared_nag_memory=self.shared_nag_memory)

    def _resolve_action_set(self, problems, seed) -> ActionSet:
        if isinstance(self.action_set, ActionSet):
            self.baseline_ = None
            return self.action_set
        if str(self.action_set).upper() == "H3":
            self.baseline_ = None
            return make_action_set("H3")
        base = self.baseline
        if base is None:
            base = NAGBaseline(K=self.K, max_iters=self.tuner_max_iters, random_state=seed).fit(problems)
        if isinstance(base, NAGBaseline):
            check_is_fitted(base, "hyperparams_")
            hp = base.hyperparams_
        else:
            hp = NagHyperparams(*base)
        self.baseline_ = hp
        return make_action_set(self.action_set, hp.as_tuple())

    def fit(self, X, y=None):
        problems = check_problems(X)
        seed = seed_from(self.random_state)
        self.action_set_ = self._resolve_action_set(problems, seed)
        agent_cfg = AgentConfig(eps0=self.eps0, alpha0=self.alpha0, gamma=self.gamma,
                                N=check_positive_int(self.n_episodes, "n_episodes", 0),
                                final_fraction=self.final_fraction)
        self.q_table_, self.training_report_ = train_agent(problems, self.action_set_, self.env_config_,
                                                           agent_cfg, seed)
        self.policy_ = greedy_policy(self.q_table_)
        self.n_features_in_ = problems[0].dim
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "q_table_")
        problems = check_problems(X)
        if problems[0].dim != self.n_features_in_:
            raise ValueError(f"fitted on d={self.n_features_in_}, got d={problems[0].dim}")
        report = evaluate_policy(problems, self.policy_, self.action_set_, self.env_config_,
                                 seed=seed_from(self.random_state))
        return np.array([r.best_y for r in report.records])

    def solve(self, problem, rng=None) -> EpisodeTrace:
        """Greedy episode on one problem, returning the full trace."""
        check_is_fitted(self, "q_table_")
        env = SUSEnvironment(self.action_set_, self.env_config_, rng)
        obs = env.reset(problem)
        while not obs.terminated:
            obs = env.step(self.policy_(obs.s))
        return env.trace

    def score(self, X, y=None) -> float:
        """Negative mean log10 of the reached objective (higher is better)."""
        return -float(np.mean(np.log10(np.maximum(self.predict(X), 1e-300))))

    def relative_improvement(self, X, baseline: "NAGBaseline | None" = None) -> np.ndarray:
        """Per-problem ``(y_nag - y_sus) / y_nag`` against ``baseline`` (default: the fitted one)."""
        check_is_fitted(self, "q_table_")
        problems = check_problems(X)
        hp = baseline.hyperparams_ if baseline is not None else self.baseline_
        if hp is None:
            raise ValueError("no NAG baseline available for comparison")
        y_nag = evaluate_nag(problems, hp, self.env_config_)
        y_sus = self.predict(problems)
        return np.array([relative_improvement(r.best_y, s) for r, s in zip(y_nag.records, y_sus)])
