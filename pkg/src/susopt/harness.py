"""Training loop, paired evaluation against the tuned NAG baseline, and parameter sweeps."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import (
    AgentConfig,
    Fingerprint,
    PolicyTable,
    QTable,
    greedy_policy,
    sarsa_update,
    sarsa_update_terminal,
    schedule_value,
    select_action,
)
from .environment import EnvConfig, SUSEnvironment
from .problem import KappaSpec, ProblemSet, QuadraticProblem, sample_problem_set, value_and_grad
from .tuner import NagHyperparams, TunerConfig, run_nag_fixed, tune_baseline
from .updates import ActionSet, make_action_set

logger = logging.getLogger(__name__)


# -- seeds ------------------------------------------------------------------

SEED_TAGS = {"train_set": 1, "test_set": 2, "tuner": 3, "training": 4, "evaluation": 5}


def derive_seed(master: int, *tags: int) -> int:
    """Independent 63-bit seed for a named sub-stream of ``master``."""
    ss = np.random.SeedSequence([int(master), *(int(t) for t in tags)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# -- configuration ----------------------------------------------------------

def _from_dict(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {sorted(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class ProblemConfig:
    d: int = 20
    kappa: tuple[float, float] = (1e2, 1e3)
    n_train: int = 100
    n_test: int = 100

    @property
    def kappa_spec(self) -> KappaSpec:
        return KappaSpec.coerce(self.kappa)


@dataclass(frozen=True)
class TargetConfig:
    relative: float = 1e-4
    cap_factor: int = 10


@dataclass(frozen=True)
class TunerSection:
    max_iters: int = 500
    sample_size: int = 50
    aggregation: str = "mean_log"
    common_random_numbers: bool = False


@dataclass(frozen=True)
class SweepConfig:
    episodes: tuple[int, ...] = (100, 400, 1600, 6400)
    seeds: int = 5
    resolutions: tuple[tuple[int, int], ...] = ((10, 20),)
    dims: tuple[int, ...] = (10, 20, 50)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    action_set: str = "H1"
    tuner: TunerSection = field(default_factory=TunerSection)
    mode: str = "fixed_budget"
    target: TargetConfig = field(default_factory=TargetConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output_dir: str = "runs"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("fixed_budget", "fixed_target"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.action_set.upper() not in ("H1", "H2", "H3"):
            raise ValueError(f"unknown action set {self.action_set!r}")
        if self.env.target is not None or self.env.max_evals is not None:
            raise ValueError("set targets through the 'target' section, not env.target/env.max_evals")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        sections = {"problem": ProblemConfig, "env": EnvConfig, "agent": AgentConfig,
                    "tuner": TunerSection, "target": TargetConfig, "sweep": SweepConfig}
        for key, sub in sections.items():
            if key in data:
                data[key] = _from_dict(sub, data[key], key)
        if "problem" in data and isinstance(data["problem"].kappa, list):
            data["problem"] = dataclasses.replace(data["problem"], kappa=tuple(data["problem"].kappa))
        if "sweep" in data:
            sw = data["sweep"]
            data["sweep"] = dataclasses.replace(
                sw, episodes=tuple(sw.episodes), dims=tuple(sw.dims),
                resolutions=tuple(tuple(r) for r in sw.resolutions))
        return _from_dict(cls, data, "config")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def tuner_config(self, seed: int) -> TunerConfig:
        t = self.tuner
        return TunerConfig(K=self.env.K, max_iters=t.max_iters, sample_size=t.sample_size, seed=seed,
                           aggregation=t.aggregation, common_random_numbers=t.common_random_numbers)


# -- training ---------------------------------------------------------------

@dataclass
class TrainingReport:
    instance: list[int] = field(default_factory=list)
    returns: list[float] = field(default_factory=list)
    best_y: list[float] = field(default_factory=list)
    eps: list[float] = field(default_factory=list)
    alpha: list[float] = field(default_factory=list)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "instance", "return", "best_y", "eps", "alpha"])
            for n, row in enumerate(zip(self.instance, self.returns, self.best_y, self.eps, self.alpha), start=1):
                w.writerow([n, row[0], *(repr(v) for v in row[1:])])
        return path


def fingerprint_for(action_set: ActionSet, env_cfg: EnvConfig, gamma: float) -> Fingerprint:
    return Fingerprint(env_cfg.m1, env_cfg.m2, action_set.J, float(gamma), action_set.fingerprint())


def train_agent(
    training_set: Sequence[QuadraticProblem],
    action_set: ActionSet,
    env_cfg: EnvConfig,
    agent_cfg: AgentConfig,
    seed: int,
    q: QTable | None = None,
) -> tuple[QTable, TrainingReport]:
    """SARSA training with per-episode exponentially decaying epsilon and alpha."""
    fp = fingerprint_for(action_set, env_cfg, agent_cfg.gamma)
    if q is None:
        q = QTable(fp.m1, fp.m2, fp.J, fp.gamma, fp.action_set_hash)
    else:
        q.fingerprint.check(fp, "Q-table")
    if len(training_set) == 0:
        raise ValueError("training set is empty")
    pick_rng, agent_rng, env_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    env = SUSEnvironment(action_set, env_cfg, env_rng)
    gamma = agent_cfg.gamma
    report = TrainingReport()
    for n in range(1, agent_cfg.N + 1):
        eps = schedule_value(agent_cfg.eps0, n, agent_cfg)
        alpha = schedule_value(agent_cfg.alpha0, n, agent_cfg)
        i = int(pick_rng.integers(len(training_set)))
        obs = env.reset(training_set[i])
        total = 0.0
        if not obs.terminated:
            s = obs.s
            a = select_action(q, s, eps, agent_rng)
            while True:
                obs = env.step(a)
                total += obs.r
                if obs.terminated:
                    sarsa_update_terminal(q, s, a, obs.r, alpha)
                    break
                a_next = select_action(q, obs.s, eps, agent_rng)
                sarsa_update(q, s, a, obs.r, obs.s, a_next, alpha, gamma)
                s, a = obs.s, a_next
        report.instance.append(i)
        report.returns.append(total)
        report.best_y.append(env.state.best_y)
        report.eps.append(eps)
        report.alpha.append(alpha)
    return q, report


# -- evaluation -------------------------------------------------------------

@dataclass
class EvalRecord:
    instance_id: int
    y1: float
    y_final: float
    best_y: float
    k_T: int
    censored: bool


@dataclass
class EvalReport:
    method: str
    mode: str
    records: list[EvalRecord]
    histories: list[list[float]] = field(default_factory=list, repr=False)

    @property
    def instance_ids(self) -> list[int]:
        return [r.instance_id for r in self.records]

    def metric_values(self) -> np.ndarray:
        if self.mode == "fixed_target":
            return np.array([r.k_T for r in self.records], dtype=float)
        return np.array([r.best_y for r in self.records])

    def summary(self) -> dict:
        return summarize(self.metric_values())


def _target_cfg(env_cfg: EnvConfig, y1: float, mode: str, target_rel: float, cap_factor: int) -> EnvConfig:
    if mode == "fixed_budget":
        return env_cfg
    return dataclasses.replace(env_cfg, target=target_rel * y1, max_evals=cap_factor * env_cfg.K)


def _check_mode(mode: str) -> None:
    if mode not in ("fixed_budget", "fixed_target"):
        raise ValueError(f"unknown mode {mode!r}")


def evaluate_policy(
    test_set: Sequence[QuadraticProblem],
    q: QTable | PolicyTable,
    action_set: ActionSet,
    env_cfg: EnvConfig,
    mode: str = "fixed_budget",
    target_rel: float = 1e-4,
    cap_factor: int = 10,
    seed: int = 0,
    gamma: float | None = None,
) -> EvalReport:
    """Greedy deployment (no exploration, no learning) on every test instance."""
    _check_mode(mode)
    policy = greedy_policy(q) if isinstance(q, QTable) else q
    fp = policy.fingerprint
    expected = fingerprint_for(action_set, env_cfg, fp.gamma if gamma is None else gamma)
    fp.check(expected, "policy")
    rng = np.random.default_rng(seed)
    records, histories = [], []
    for i, p in enumerate(test_set):
        y1 = value_and_grad(p, p.x1)[0]
        cfg = _target_cfg(env_cfg, y1, mode, target_rel, cap_factor)
        env = SUSEnvironment(action_set, cfg, rng)
        obs = env.reset(p)
        while not obs.terminated:
            obs = env.step(policy(obs.s))
        tr = env.trace
        records.append(EvalRecord(i, tr.y[0], tr.y[-1], tr.best_y[-1], tr.k[-1], tr.reason != "target" and mode == "fixed_target"))
        histories.append(list(tr.best_y))
    return EvalReport("SUS", mode, records, histories)


def evaluate_nag(
    test_set: Sequence[QuadraticProblem],
    hp: NagHyperparams,
    env_cfg: EnvConfig,
    mode: str = "fixed_budget",
    target_rel: float = 1e-4,
    cap_factor: int = 10,
) -> EvalReport:
    _check_mode(mode)
    records, histories = [], []
    for i, p in enumerate(test_set):
        if mode == "fixed_budget":
            run = run_nag_fixed(p, hp, env_cfg.K, literal_interim=env_cfg.literal_interim)
        else:
            y1 = value_and_grad(p, p.x1)[0]
            run = run_nag_fixed(p, hp, env_cfg.K, target=target_rel * y1, max_evals=cap_factor * env_cfg.K,
                                literal_interim=env_cfg.literal_interim)
        censored = mode == "fixed_target" and not run.reached_target
        records.append(EvalRecord(i, run.ys[0], run.y_final, run.best_y, run.evaluations, censored))
        histories.append(run.best_ys)
    return EvalReport("NAG", mode, records, histories)


# -- metrics ----------------------------------------------------------------

def relative_improvement(y_nag: float, y_sus: float) -> float:
    """``(y_nag - y_sus) / y_nag``; NaN (with a warning) when ``y_nag <= 0``."""
    if not y_nag > 0:
        logger.warning("relative improvement undefined for y_nag=%g; record excluded", y_nag)
        return math.nan
    return (y_nag - y_sus) / y_nag


def runtime_reduction(k_nag: int, k_sus: int) -> float:
    if k_nag < 1:
        raise ValueError(f"k_nag must be >= 1, got {k_nag}")
    return (k_nag - k_sus) / k_nag


def quantiles(values: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile (numpy's default ``"linear"`` method)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("quantile of an empty sequence")
    if not 0 <= q <= 1:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    return float(np.quantile(values, q, method="linear"))


def summarize(values: Sequence[float]) -> dict:
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if v.size == 0:
        return {"n": 0, "mean": math.nan, "std": math.nan, "median": math.nan, "q25": math.nan, "q75": math.nan}
    return {
        "n": int(v.size),
        "mean": float(np.mean(v)),
        "std": float(np.std(v)),
        "median": quantiles(v, 0.5),
        "q25": quantiles(v, 0.25),
        "q75": quantiles(v, 0.75),
    }


@dataclass
class Comparison:
    mode: str
    rows: list[dict]

    @property
    def metric(self) -> np.ndarray:
        return np.array([r["metric"] for r in self.rows], dtype=float)

    def summary(self) -> dict:
        return summarize(self.metric)

    def to_csv(self, path) -> Path:
        path = Path(path)
        cols = ["instance_id", "y1", "y_nag", "y_sus", "metric"]
        if self.mode == "fixed_target":
            cols += ["k_nag", "k_sus", "censored_nag", "censored_sus"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
        return path


def compare(nag: EvalReport, sus: EvalReport) -> Comparison:
    """Pair the two reports instance by instance and compute the mode's metric."""
    if nag.instance_ids != sus.instance_ids:
        raise ValueError("reports are not paired: instance ids differ")
    if nag.mode != sus.mode:
        raise ValueError(f"reports use different modes ({nag.mode}, {sus.mode})")
    rows = []
    for a, b in zip(nag.records, sus.records):
        if a.y1 != b.y1:
            raise ValueError(f"instance {a.instance_id}: start points differ")
        row = {"instance_id": a.instance_id, "y1": a.y1, "y_nag": a.best_y, "y_sus": b.best_y}
        if nag.mode == "fixed_budget":
            row["metric"] = relative_improvement(a.best_y, b.best_y)
        else:
            row["metric"] = runtime_reduction(a.k_T, b.k_T)
            row.update(k_nag=a.k_T, k_sus=b.k_T, censored_nag=int(a.censored), censored_sus=int(b.censored))
        rows.append(row)
    return Comparison(nag.mode, rows)


def history_table(nag: EvalReport, sus: EvalReport) -> list[dict]:
    """Per-iteration quartiles of the best-so-far objective of both methods."""
    n = max(max(len(h) for h in nag.histories), max(len(h) for h in sus.histories))
    out = []
    for k in range(n):
        row = {"k": k + 1}
        for name, rep in (("nag", nag), ("sus", sus)):
            vals = [h[min(k, len(h) - 1)] for h in rep.histories]
            row[f"{name}_q25"] = quantiles(vals, 0.25)
            row[f"{name}_median"] = quantiles(vals, 0.5)
            row[f"{name}_q75"] = quantiles(vals, 0.75)
        out.append(row)
    return out


# -- pipelines and sweeps ---------------------------------------------------

@dataclass
class ProblemSets:
    train: ProblemSet
    test: ProblemSet


def make_problem_sets(pcfg: ProblemConfig, master_seed: int, d: int | None = None) -> ProblemSets:
    d = pcfg.d if d is None else d
    train = sample_problem_set(d, pcfg.kappa_spec, pcfg.n_train, derive_seed(master_seed, SEED_TAGS["train_set"], d), "training")
    test = sample_problem_set(d, pcfg.kappa_spec, pcfg.n_test, derive_seed(master_seed, SEED_TAGS["test_set"], d), "test")
    return ProblemSets(train, test)


def tune(cfg: ExperimentConfig, training_set, master_seed: int):
    return tune_baseline(training_set, cfg.tuner_config(derive_seed(master_seed, SEED_TAGS["tuner"])))


def sweep_training_length(
    cfg: ExperimentConfig,
    episode_grid: Sequence[int] | None = None,
    seeds: int | None = None,
    resolutions: Sequence[tuple[int, int]] | None = None,
    master_seed: int | None = None,
    hp: NagHyperparams | None = None,
    sets: ProblemSets | None = None,
) -> list[dict]:
    """Mean and std over training seeds of the mean relative improvement, per (resolution, N)."""
    master_seed = cfg.seed if master_seed is None else master_seed
    episode_grid = cfg.sweep.episodes if episode_grid is None else episode_grid
    seeds = cfg.sweep.seeds if seeds is None else seeds
    resolutions = cfg.sweep.resolutions if resolutions is None else resolutions
    sets = make_problem_sets(cfg.problem, master_seed) if sets is None else sets
    hp = tune(cfg, sets.train, master_seed).hyperparams if hp is None else hp
    action_set = make_action_set(cfg.action_set, hp.as_tuple())
    nag_report = evaluate_nag(sets.test, hp, cfg.env)
    rows = []
    for m1, m2 in resolutions:
        env_cfg = dataclasses.replace(cfg.env, m1=m1, m2=m2)
        for N in episode_grid:
            agent_cfg = dataclasses.replace(cfg.agent, N=N)
            per_seed = []
            for s in range(seeds):
                q, _ = train_agent(sets.train, action_set, env_cfg, agent_cfg,
                                   derive_seed(master_seed, SEED_TAGS["training"], N, s))
                sus = evaluate_policy(sets.test, q, action_set, env_cfg)
                per_seed.append(float(np.nanmean(compare(nag_report, sus).metric)))
            rows.append({"m1": m1, "m2": m2, "N": N, "n_seeds": seeds,
                         "mean": float(np.mean(per_seed)), "std": float(np.std(per_seed)),
                         "per_seed": per_seed, "eta1": hp.eta1, "mu": hp.mu, "delta": hp.delta})
    return rows


def sweep_dimension(
    cfg: ExperimentConfig,
    dims: Sequence[int] | None = None,
    master_seed: int | None = None,
) -> list[dict]:
    """Per dimension: tune, train in fixed-budget mode, compare iterations-to-target."""
    master_seed = cfg.seed if master_seed is None else master_seed
    dims = cfg.sweep.dims if dims is None else dims
    rows = []
    for d in dims:
        sets = make_problem_sets(cfg.problem, master_seed, d=d)
        hp = tune(cfg, sets.train, master_seed).hyperparams
        action_set = make_action_set(cfg.action_set, hp.as_tuple())
        q, _ = train_agent(sets.train, action_set, cfg.env, cfg.agent,
                           derive_seed(master_seed, SEED_TAGS["training"], d))
        kwargs = dict(mode="fixed_target", target_rel=cfg.target.relative, cap_factor=cfg.target.cap_factor)
        nag = evaluate_nag(sets.test, hp, cfg.env, **kwargs)
        sus = evaluate_policy(sets.test, q, action_set, cfg.env,
                              seed=derive_seed(master_seed, SEED_TAGS["evaluation"]), **kwargs)
        comp = compare(nag, sus)
        stats = comp.summary()
        rows.append({"d": d, "median": stats["median"], "q25": stats["q25"], "q75": stats["q75"],
                     "mean": stats["mean"], "n": stats["n"],
                     "censored_nag": sum(r.censored for r in nag.records),
                     "censored_sus": sum(r.censored for r in sus.records),
                     "eta1": hp.eta1, "mu": hp.mu, "delta": hp.delta})
    return rows


def write_rows(rows: list[dict], path) -> Path:
    path = Path(path)
    if not rows:
        path.write_text("")
        return path
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else (";".join(repr(x) for x in v) if isinstance(v, list) else v)
                        for v in (r[c] for c in cols)])
    return path
