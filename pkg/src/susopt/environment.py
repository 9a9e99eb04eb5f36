"""Optimization environment: applies the selected update, evaluates, emits state and reward."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .problem import QuadraticProblem, value_and_grad
from .updates import (
    ActionSet,
    UpdateKind,
    UpdateMemory,
    gd_update,
    guru_update,
    nag_update,
    reset_memory,
)

logger = logging.getLogger(__name__)

_TINY = 1e-300


@dataclass(frozen=True)
class EnvConfig:
    """Environment settings.

    ``K`` is the evaluation budget; the initial evaluation counts against it, so an
    episode performs at most ``K - 1`` updates. In fixed-target mode (``target`` set)
    the episode stops once the best objective reaches ``target`` or after
    ``max_evals`` evaluations (default ``K``). The time-fraction state always
    refers to ``K``.

    ``l``/``u`` bound the (optionally log10-transformed) objective for the level
    state. When left as ``None`` they are set per episode to
    ``log10(y1) - log_span`` and ``log10(y1)`` (or ``0`` and ``y1`` without the log).
    """

    K: int = 50
    m1: int = 10
    m2: int = 20
    l: float | None = None
    u: float | None = None
    use_log_state: bool = True
    log_span: float = 8.0
    reward_kind: str = "difference"
    greedy_revert: bool = True
    target: float | None = None
    max_evals: int | None = None
    literal_interim: bool = False
    shared_nag_memory: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError(f"bin counts must be >= 1, got m1={self.m1}, m2={self.m2}")
        if (self.l is None) != (self.u is None):
            raise ValueError("give both l and u, or neither")
        if self.l is not None and not self.l < self.u:
            raise ValueError(f"need l < u, got l={self.l}, u={self.u}")
        if self.reward_kind not in ("difference", "log_ratio"):
            raise ValueError(f"unknown reward_kind {self.reward_kind!r}")
        if self.target is not None and self.target < 0:
            raise ValueError(f"target must be nonnegative, got {self.target}")
        if self.max_evals is not None and self.max_evals < 1:
            raise ValueError(f"max_evals must be >= 1, got {self.max_evals}")

    @property
    def eval_cap(self) -> int:
        return self.K if self.max_evals is None else self.max_evals

    def bounds_for(self, y1: float) -> tuple[float, float]:
        if self.l is not None:
            return self.l, self.u
        if self.use_log_state:
            top = math.log10(max(y1, _TINY))
            return top - self.log_span, top
        return 0.0, y1 if y1 > 0 else 1.0


class Observation(NamedTuple):
    s: tuple[int, int]
    r: float
    terminated: bool


def state_s1(y: float, cfg: EnvConfig, l: float | None = None, u: float | None = None) -> int:
    """Objective-level bin in ``1..m1``; out-of-range values are clamped."""
    if l is None:
        l, u = cfg.l, cfg.u
    z = math.log10(max(y, _TINY)) if cfg.use_log_state else y
    if math.isnan(z):
        z = math.inf
    frac = min(1.0, max(0.0, (z - l) / (u - l)))
    return int(math.floor(frac * (cfg.m1 - 1))) + 1


def state_s2(k: int, cfg: EnvConfig) -> int:
    """Budget-fraction bin in ``1..m2`` after ``k`` executed iterations."""
    return min(int(math.floor(k / (cfg.K / cfg.m2))) + 1, cfg.m2)


def compute_reward(y_prev: float, y: float, cfg: EnvConfig) -> float:
    if cfg.reward_kind == "difference":
        return y_prev - y
    if y_prev <= 0 or y <= 0:
        logger.warning("log-ratio reward with nonpositive objective (%g, %g); clamping", y_prev, y)
        y_prev, y = max(y_prev, _TINY), max(y, _TINY)
    return math.log(y_prev / y)


@dataclass
class EnvState:
    k: int
    x: np.ndarray
    y: float
    g: np.ndarray
    y_prev: float
    y_obs: float
    best_x: np.ndarray
    best_y: float
    l: float
    u: float
    prev_kind: UpdateKind | None = None
    prev_action: int = 0
    memories: list[UpdateMemory] = field(default_factory=list)
    memory_last_used: list[int] = field(default_factory=list)
    terminated: bool = False
    reason: str | None = None


@dataclass
class EpisodeTrace:
    k: list[int] = field(default_factory=list)
    action: list[int] = field(default_factory=list)
    y: list[float] = field(default_factory=list)
    best_y: list[float] = field(default_factory=list)
    r: list[float] = field(default_factory=list)
    s1: list[int] = field(default_factory=list)
    s2: list[int] = field(default_factory=list)
    reason: str | None = None

    def append(self, k, action, y, best_y, r, s):
        self.k.append(k)
        self.action.append(action)
        self.y.append(y)
        self.best_y.append(best_y)
        self.r.append(r)
        self.s1.append(s[0])
        self.s2.append(s[1])

    def __len__(self):
        return len(self.k)

    @property
    def final_best_y(self) -> float:
        return self.best_y[-1]

    @property
    def evaluations(self) -> int:
        return self.k[-1]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "action", "y", "best_y", "r", "s1", "s2"])
            for row in zip(self.k, self.action, self.y, self.best_y, self.r, self.s1, self.s2):
                w.writerow([row[0], row[1], repr(row[2]), repr(row[3]), repr(row[4]), row[5], row[6]])
        return path


class SUSEnvironment:
    """Environment half of the agent/environment loop for one action set.

    Call :meth:`reset` with a problem, then :meth:`step` with 1-based action
    indices until the returned observation is terminal.
    """

    def __init__(self, action_set: ActionSet, cfg: EnvConfig, rng: np.random.Generator | None = None):
        self.action_set = action_set
        self.cfg = cfg
        self.rng = np.random.default_rng() if rng is None else rng
        self.problem: QuadraticProblem | None = None
        self.state: EnvState | None = None
        self.trace: EpisodeTrace | None = None

    def _observe(self) -> tuple[int, int]:
        st = self.state
        return state_s1(st.y, self.cfg, st.l, st.u), state_s2(st.k - 1, self.cfg)

    def _check_done(self) -> None:
        st, cfg = self.state, self.cfg
        if cfg.target is not None and st.best_y <= cfg.target:
            st.terminated, st.reason = True, "target"
        elif st.k >= cfg.eval_cap:
            st.terminated, st.reason = True, "budget"

    def reset(self, problem: QuadraticProblem) -> Observation:
        self.problem = problem
        x = np.array(problem.x1, dtype=float)
        y, g = value_and_grad(problem, x)
        l, u = self.cfg.bounds_for(y)
        n_mem = 1 if self.cfg.shared_nag_memory else self.action_set.J
        self.state = EnvState(
            k=1, x=x, y=y, g=g, y_prev=y, y_obs=y, best_x=x, best_y=y, l=l, u=u,
            memories=[UpdateMemory() for _ in range(n_mem)],
            memory_last_used=[-1] * n_mem,
        )
        self._check_done()
        s = self._observe()
        self.trace = EpisodeTrace()
        self.trace.append(1, 0, y, y, 0.0, s)
        self.trace.reason = self.state.reason
        return Observation(s, 0.0, self.state.terminated)

    def step(self, a: int) -> Observation:
        st, cfg = self.state, self.cfg
        if st is None:
            raise RuntimeError("call reset() before step()")
        if st.terminated:
            raise RuntimeError(f"episode already terminated ({st.reason})")
        if not 1 <= a <= self.action_set.J:
            raise ValueError(f"action {a} out of range 1..{self.action_set.J}")
        update = self.action_set.entries[a - 1]
        kind, params = update.kind, update.params

        if st.prev_kind is UpdateKind.GURU:
            for mem in st.memories:
                reset_memory(mem)

        if kind is UpdateKind.GD:
            x_new = gd_update(st.x, st.g, st.k, params)
        elif kind is UpdateKind.NAG:
            m = 0 if cfg.shared_nag_memory else a - 1
            mem = st.memories[m]
            if mem.initialized and st.memory_last_used[m] != st.k - 1:
                # another update moved the iterate since this memory's last call
                mem.x_pos = st.x.copy()
            x_new = nag_update(mem, st.x, st.g, st.k, params, cfg.literal_interim)
            st.memory_last_used[m] = st.k
        else:
            x_new = guru_update(self.problem.dim, params, self.rng)

        y_new, g_new = value_and_grad(self.problem, x_new)
        r = compute_reward(st.y_obs, y_new, cfg)
        st.y_prev, st.y_obs = st.y_obs, y_new
        if not (cfg.greedy_revert and kind is UpdateKind.GURU and y_new > st.y):
            st.x, st.y, st.g = x_new, y_new, g_new
        if y_new < st.best_y:
            st.best_x, st.best_y = x_new, y_new
        st.k += 1
        st.prev_kind, st.prev_action = kind, a
        self._check_done()
        s = self._observe()
        self.trace.append(st.k, a, y_new, st.best_y, r, s)
        self.trace.reason = st.reason
        return Observation(s, r, st.terminated)


def env_reset(env: SUSEnvironment, problem: QuadraticProblem) -> Observation:
    return env.reset(problem)


def env_step(env: SUSEnvironment, a: int) -> Observation:
    return env.step(a)


def run_episode(
    problem: QuadraticProblem,
    policy: Callable[[Observation], int],
    action_set: ActionSet,
    cfg: EnvConfig,
    rng: np.random.Generator | None = None,
) -> EpisodeTrace:
    """Drive one full episode with ``policy`` mapping each observation to an action."""
    env = SUSEnvironment(action_set, cfg, rng)
    obs = env.reset(problem)
    while not obs.terminated:
        obs = env.step(policy(obs))
    return env.trace
