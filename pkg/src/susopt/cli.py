"""Command-line interface.

Every subcommand takes ``--config <path>`` (JSON document mirroring
:class:`~susopt.harness.ExperimentConfig`) and ``--seed <u64>`` (master seed,
overriding the config's ``seed``). Outputs go to the config's ``output_dir``
(or ``--out``) together with a ``manifest_<command>.json``.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import sklearn

from . import __version__
from .agent import PolicyTable, QTable, greedy_policy
from .harness import (
    SEED_TAGS,
    ExperimentConfig,
    compare,
    derive_seed,
    evaluate_nag,
    evaluate_policy,
    fingerprint_for,
    history_table,
    make_problem_sets,
    ProblemSets,
    sweep_dimension,
    sweep_training_length,
    train_agent,
    write_rows,
)
from .problem import load_problem_set, save_problem_set
from .tuner import load_tuned, save_tuned, tune_baseline
from .updates import make_action_set

logger = logging.getLogger("susopt")

FILES = {
    "train_set": "train_problems.npz",
    "test_set": "test_problems.npz",
    "tuned": "tuned.json",
    "qtable": "qtable.npz",
    "policy": "policy.npz",
    "training": "training.csv",
    "eval": "eval.csv",
    "eval_summary": "eval_summary.json",
    "history": "history.csv",
    "policy_csv": "policy.csv",
    "sweep_episodes": "sweep_episodes.csv",
    "sweep_dim": "sweep_dim.csv",
}


class CLIError(Exception):
    pass


class Run:
    def __init__(self, cfg: ExperimentConfig, seed: int, out: Path, command: str):
        self.cfg = cfg
        self.seed = seed
        self.out = out
        self.command = command
        self.outputs: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, key: str) -> Path:
        return self.out / FILES[key]

    def wrote(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    def problem_sets(self, create: bool = True) -> ProblemSets:
        tr_path, te_path = self.path("train_set"), self.path("test_set")
        tr_seed = derive_seed(self.seed, SEED_TAGS["train_set"], self.cfg.problem.d)
        te_seed = derive_seed(self.seed, SEED_TAGS["test_set"], self.cfg.problem.d)
        if tr_path.exists() and te_path.exists():
            sets = ProblemSets(load_problem_set(tr_path), load_problem_set(te_path))
            p = self.cfg.problem
            if (sets.train.seed, sets.test.seed) == (tr_seed, te_seed) and sets.train.d == p.d \
                    and len(sets.train) == p.n_train and len(sets.test) == p.n_test \
                    and sets.train.kappa_spec == p.kappa_spec:
                return sets
            if not create:
                raise CLIError(f"problem sets in {self.out} do not match config/seed; rerun gen-problems")
        elif not create:
            raise CLIError(f"no problem sets in {self.out}; run gen-problems first")
        sets = make_problem_sets(self.cfg.problem, self.seed)
        self.wrote(save_problem_set(sets.train, tr_path))
        self.wrote(save_problem_set(sets.test, te_path))
        return sets

    def tuner_config(self):
        return self.cfg.tuner_config(derive_seed(self.seed, SEED_TAGS["tuner"]))

    def tuned(self):
        path = self.path("tuned")
        if not path.exists():
            raise CLIError(f"no tuned baseline at {path}; run tune first")
        hp, rec = load_tuned(path)
        tcfg = self.tuner_config()
        if rec.get("config_hash") != tcfg.config_hash() or rec.get("seed") != tcfg.seed:
            raise CLIError(f"{path} was produced with a different config or seed; rerun tune")
        return hp

    def action_set(self, hp=None):
        if self.cfg.action_set.upper() == "H3":
            return make_action_set("H3")
        return make_action_set(self.cfg.action_set, (hp or self.tuned()).as_tuple())

    def manifest(self) -> Path:
        def digest(p: Path) -> str:
            return hashlib.sha256(p.read_bytes()).hexdigest()

        rec = {
            "command": self.command,
            "config_hash": self.cfg.config_hash(),
            "config": self.cfg.to_dict(),
            "master_seed": self.seed,
            "derived_seeds": {k: derive_seed(self.seed, v) for k, v in SEED_TAGS.items()},
            "versions": {"susopt": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scikit-learn": sklearn.__version__},
            "outputs": {p.name: digest(p) for p in self.outputs},
        }
        path = self.out / f"manifest_{self.command}.json"
        path.write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
        return path


def cmd_gen_problems(run: Run) -> None:
    for p in (run.path("train_set"), run.path("test_set")):
        if p.exists():
            p.unlink()
    sets = run.problem_sets()
    print(f"wrote {len(sets.train)} training and {len(sets.test)} test instances (d={sets.train.d}) to {run.out}")


def cmd_tune(run: Run) -> None:
    sets = run.problem_sets()
    tcfg = run.tuner_config()
    res = tune_baseline(sets.train, tcfg)
    run.wrote(save_tuned(res.hyperparams, run.path("tuned"), seed=tcfg.seed,
                         config_hash=tcfg.config_hash(), objective=res.objective))
    hp = res.hyperparams
    print(f"tuned NAG: eta1={hp.eta1:.6g} mu={hp.mu:.6g} delta={hp.delta:.6g} "
          f"objective={res.objective:.6g} (initial {res.initial_objective:.6g}, {res.n_iter} iterations)")


def cmd_train(run: Run) -> None:
    sets = run.problem_sets(create=False)
    action_set = run.action_set()
    q, report = train_agent(sets.train, action_set, run.cfg.env, run.cfg.agent,
                            derive_seed(run.seed, SEED_TAGS["training"]))
    run.wrote(q.save(run.path("qtable")))
    run.wrote(greedy_policy(q).save(run.path("policy")))
    run.wrote(report.to_csv(run.path("training")))
    print(f"trained {run.cfg.agent.N} episodes on action set {run.cfg.action_set} (J={action_set.J})")


def cmd_eval(run: Run) -> None:
    cfg = run.cfg
    sets = run.problem_sets(create=False)
    hp = run.tuned()
    action_set = run.action_set(hp)
    fp = fingerprint_for(action_set, cfg.env, cfg.agent.gamma)
    q = QTable.load(run.path("qtable"), expected=fp)
    kwargs = dict(mode=cfg.mode, target_rel=cfg.target.relative, cap_factor=cfg.target.cap_factor)
    nag = evaluate_nag(sets.test, hp, cfg.env, **kwargs)
    sus = evaluate_policy(sets.test, q, action_set, cfg.env,
                          seed=derive_seed(run.seed, SEED_TAGS["evaluation"]), **kwargs)
    comp = compare(nag, sus)
    run.wrote(comp.to_csv(run.path("eval")))
    run.wrote(write_rows(history_table(nag, sus), run.path("history")))
    summary = {"mode": cfg.mode,
               "metric": "relative_improvement" if cfg.mode == "fixed_budget" else "runtime_reduction",
               "metric_summary": comp.summary(), "nag": nag.summary(), "sus": sus.summary(),
               "tuned": {"eta1": hp.eta1, "mu": hp.mu, "delta": hp.delta}}
    path = run.path("eval_summary")
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    run.wrote(path)
    s = summary["metric_summary"]
    print(f"{summary['metric']}: mean={s['mean']:.4g} median={s['median']:.4g} "
          f"q25={s['q25']:.4g} q75={s['q75']:.4g} over {s['n']} instances")


def cmd_sweep_episodes(run: Run) -> None:
    sets = run.problem_sets()
    hp = run.tuned() if run.path("tuned").exists() else None
    rows = sweep_training_length(run.cfg, master_seed=run.seed, hp=hp, sets=sets)
    run.wrote(write_rows(rows, run.path("sweep_episodes")))
    for r in rows:
        print(f"m1={r['m1']} m2={r['m2']} N={r['N']}: {r['mean']:.4g} +/- {r['std']:.4g}")


def cmd_sweep_dim(run: Run) -> None:
    rows = sweep_dimension(run.cfg, master_seed=run.seed)
    run.wrote(write_rows(rows, run.path("sweep_dim")))
    for r in rows:
        print(f"d={r['d']}: median={r['median']:.4g} q25={r['q25']:.4g} q75={r['q75']:.4g}")


def cmd_export_policy(run: Run) -> None:
    action_set = run.action_set()
    fp = fingerprint_for(action_set, run.cfg.env, run.cfg.agent.gamma)
    path = run.path("policy")
    if path.exists():
        policy = PolicyTable.load(path, expected=fp)
    else:
        policy = greedy_policy(QTable.load(run.path("qtable"), expected=fp))
    run.wrote(policy.to_csv(run.path("policy_csv")))
    print(f"wrote {run.path('policy_csv')}")


COMMANDS = {
    "gen-problems": cmd_gen_problems,
    "tune": cmd_tune,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-episodes": cmd_sweep_episodes,
    "sweep-dim": cmd_sweep_dim,
    "export-policy": cmd_export_policy,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="susopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment config (defaults used if omitted)")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        seed = cfg.seed if args.seed is None else args.seed
        if not 0 <= seed < 2**64:
            raise CLIError(f"seed must be an unsigned 64-bit integer, got {seed}")
        cfg = dataclasses.replace(cfg, seed=seed)
        out = args.out if args.out is not None else Path(cfg.output_dir)
        run = Run(cfg, seed, out, args.command)
        COMMANDS[args.command](run)
        run.manifest()
    except (CLIError, ValueError, FileNotFoundError, OSError, KeyError) as exc:
        print(f"susopt {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
