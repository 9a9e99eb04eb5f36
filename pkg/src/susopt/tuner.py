"""Tuned NAG baseline: fixed-parameter NAG runs and Nelder-Mead hyperparameter search.

Tuned-parameter records are small JSON documents::

    {"format_version": 1, "eta1": ..., "mu": ..., "delta": ...,
     "seed": ..., "config_hash": "...", "objective": ...}
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .problem import QuadraticProblem, value_and_grad
from .updates import UpdateMemory, UpdateParams, nag_update

FORMAT_VERSION = 1
_TINY = 1e-300
_HUGE = 1e300


@dataclass(frozen=True)
class NagHyperparams:
    eta1: float
    mu: float
    delta: float

    def __post_init__(self):
        if not self.eta1 > 0:
            raise ValueError(f"eta1 must be > 0, got {self.eta1}")
        if not 0 <= self.mu < 1:
            raise ValueError(f"mu must lie in [0, 1), got {self.mu}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")

    def as_tuple(self) -> tuple[float, float, float]:
        return self.eta1, self.mu, self.delta

    def update_params(self) -> UpdateParams:
        return UpdateParams(eta=self.eta1, mu=self.mu, delta=self.delta)

    def to_unconstrained(self) -> np.ndarray:
        """Map to ``(log eta, logit mu, log delta)``; ``mu = 0`` or ``delta = 0`` map to ``-inf``."""
        with np.errstate(divide="ignore"):
            return np.array([
                math.log(self.eta1),
                math.log(self.mu) - math.log1p(-self.mu) if self.mu > 0 else -np.inf,
                math.log(self.delta) if self.delta > 0 else -np.inf,
            ])

    @classmethod
    def from_unconstrained(cls, p: Sequence[float]) -> "NagHyperparams":
        p1, p2, p3 = (float(v) for v in p)
        # numerically stable logistic
        if p2 >= 0:
            mu = 1.0 / (1.0 + math.exp(-p2))
        else:
            e = math.exp(p2)
            mu = e / (1.0 + e)
        mu = min(mu, 1.0 - 1e-16)
        return cls(math.exp(min(p1, 700.0)), mu, math.exp(min(p3, 700.0)))


@dataclass(frozen=True)
class TunerConfig:
    K: int = 50
    max_iters: int = 500
    sample_size: int = 50
    seed: int = 0
    aggregation: str = "mean_log"
    common_random_numbers: bool = False
    x0: tuple[float, float, float] = (1e-3, 0.9, 1e-2)
    init_perturbation: float = 0.1
    tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.sample_size < 1:
            raise ValueError(f"sample_size must be >= 1, got {self.sample_size}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.aggregation not in ("mean_log", "mean_raw"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class NagRun:
    y_final: float
    best_y: float
    ys: list[float] = field(repr=False)
    best_ys: list[float] = field(repr=False)
    evaluations: int
    reached_target: bool = False


def run_nag_fixed(
    p: QuadraticProblem,
    hp: NagHyperparams,
    K: int,
    target: float | None = None,
    max_evals: int | None = None,
    literal_interim: bool = False,
) -> NagRun:
    """Plain NAG from ``p.x1`` with budget ``K`` evaluations (the first at ``x1``).

    With ``target`` set, stops as soon as the best objective is ``<= target`` or
    after ``max_evals`` evaluations (default ``K``).
    """
    cap = K if max_evals is None else max_evals
    params = hp.update_params()
    mem = UpdateMemory()
    x = np.array(p.x1, dtype=float)
    y, g = value_and_grad(p, x)
    ys, best_ys = [y], [y]
    best = y
    k = 1
    with np.errstate(over="ignore", invalid="ignore"):
        while not (target is not None and best <= target) and k < cap:
            x = nag_update(mem, x, g, k, params, literal_interim)
            y, g = value_and_grad(p, x)
            best = min(best, y)
            ys.append(y)
            best_ys.append(best)
            k += 1
    return NagRun(y, best, ys, best_ys, k, target is not None and best <= target)


def run_nag_batch(problems: Sequence[QuadraticProblem], hp: NagHyperparams, K: int) -> np.ndarray:
    """Best objective after ``K`` evaluations for many same-dimension problems at once."""
    A = np.stack([p.A for p in problems])
    b = np.stack([p.b for p in problems])
    xs = np.stack([p.x_star for p in problems])
    x = np.stack([p.x1 for p in problems]).astype(float)
    eta, mu, delta = hp.as_tuple()
    with np.errstate(over="ignore", invalid="ignore"):
        g = (A @ x[:, :, None])[:, :, 0] - b
        best = 0.5 * np.einsum("ni,ni->n", x - xs, g)
        v = np.zeros_like(x)
        pos = x.copy()
        for k in range(1, K):
            v = mu * v - (eta * math.exp(-delta * k)) * g
            pos = pos + v
            x = pos + mu * v
            g = (A @ x[:, :, None])[:, :, 0] - b
            y = 0.5 * np.einsum("ni,ni->n", x - xs, g)
            best = np.fmin(best, y)
    return best


def aggregate(values: np.ndarray, how: str) -> float:
    values = np.asarray(values, dtype=float)
    values = np.where(np.isfinite(values), values, _HUGE)
    if how == "mean_log":
        return float(np.mean(np.log(np.maximum(values, _TINY))))
    return float(np.mean(values))


class HyperObjective:
    """Noisy training-set objective for NAG hyperparameters.

    Every call draws ``sample_size`` training instances uniformly with
    replacement using a generator seeded by ``(seed, call_counter)``; with
    ``common_random_numbers`` the first draw is reused on every call.
    """

    def __init__(self, training_set: Sequence[QuadraticProblem], cfg: TunerConfig):
        if len(training_set) == 0:
            raise ValueError("training set is empty")
        self.training_set = list(training_set)
        self.cfg = cfg
        self.calls = 0
        self._fixed_idx = None

    def sample_indices(self, call: int) -> np.ndarray:
        rng = np.random.default_rng([self.cfg.seed, call])
        return rng.integers(len(self.training_set), size=self.cfg.sample_size)

    def evaluate(self, hp: NagHyperparams, call: int | None = None) -> float:
        if call is None:
            call = self.calls
        self.calls += 1
        if self.cfg.common_random_numbers:
            if self._fixed_idx is None:
                self._fixed_idx = self.sample_indices(0)
            idx = self._fixed_idx
        else:
            idx = self.sample_indices(call)
        ys = run_nag_batch([self.training_set[i] for i in idx], hp, self.cfg.K)
        return aggregate(ys, self.cfg.aggregation)

    def __call__(self, p: np.ndarray) -> float:
        return self.evaluate(NagHyperparams.from_unconstrained(p))


def hyper_objective(hp: NagHyperparams, training_set, cfg: TunerConfig, call: int = 0) -> float:
    """One evaluation of the tuning objective with the instance draw fixed by ``(cfg.seed, call)``."""
    return HyperObjective(training_set, cfg).evaluate(hp, call)


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    n_iter: int
    n_fev: int
    converged: bool


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0: Sequence[float],
    max_iters: int = 500,
    tol: float = 1e-6,
    initial_step: float | Sequence[float] = 0.1,
    initial_simplex: np.ndarray | None = None,
    reflect: float = 1.0,
    expand: float = 2.0,
    contract: float = 0.5,
    shrink: float = 0.5,
) -> NelderMeadResult:
    """Minimize ``objective`` with the Nelder-Mead simplex method.

    The initial simplex perturbs each coordinate of ``x0`` by the relative
    ``initial_step`` (absolute 0.00025 for zero coordinates). Iteration stops
    after ``max_iters`` iterations or once the simplex spread, the largest
    vertex distance from the best vertex in the infinity norm together with
    the spread of function values, drops below ``tol``. An explicit
    ``initial_simplex`` of shape ``(n + 1, n)`` overrides both.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if initial_simplex is not None:
        simplex = np.array(initial_simplex, dtype=float)
        if simplex.shape != (n + 1, n):
            raise ValueError(f"initial simplex has shape {simplex.shape}, expected {(n + 1, n)}")
    else:
        steps = np.broadcast_to(np.asarray(initial_step, dtype=float), (n,))
        simplex = np.empty((n + 1, n))
        simplex[0] = x0
        for i in range(n):
            v = x0.copy()
            v[i] = v[i] * (1 + steps[i]) if v[i] != 0 else 0.00025
            simplex[i + 1] = v
    fvals = np.array([objective(v) for v in simplex])
    nfev = n + 1

    def sort():
        nonlocal simplex, fvals
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]

    sort()
    it = 0
    converged = False
    while it < max_iters:
        spread_x = np.max(np.abs(simplex[1:] - simplex[0]))
        spread_f = np.max(np.abs(fvals[1:] - fvals[0]))
        if spread_x < tol and spread_f < tol:
            converged = True
            break
        it += 1
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + reflect * (centroid - worst)
        fr = objective(xr)
        nfev += 1
        if fr < fvals[0]:
            xe = centroid + expand * (xr - centroid)
            fe = objective(xe)
            nfev += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + contract * (xr - centroid)
                fc = objective(xc)
                nfev += 1
                accept = fc <= fr
            else:
                xc = centroid + contract * (worst - centroid)
                fc = objective(xc)
                nfev += 1
                accept = fc < fvals[-1]
            if accept:
                simplex[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + shrink * (simplex[i] - simplex[0])
                    fvals[i] = objective(simplex[i])
                    nfev += 1
        sort()
    return NelderMeadResult(simplex[0].copy(), float(fvals[0]), it, nfev, converged)


@dataclass
class TuneResult:
    hyperparams: NagHyperparams
    objective: float
    initial_objective: float
    n_iter: int
    n_fev: int


def initial_simplex(start: NagHyperparams, perturbation: float = 0.1) -> np.ndarray:
    """Start vertex plus one vertex per parameter scaled by ``1 + perturbation``, in unconstrained space.

    ``mu`` is scaled down instead when scaling up would leave ``[0, 1)``.
    """
    base = start.as_tuple()
    vertices = [start]
    for i in range(3):
        v = list(base)
        v[i] *= 1 + perturbation
        if i == 1 and v[i] >= 1:
            v[i] = base[i] * (1 - perturbation)
        vertices.append(NagHyperparams(*v))
    return np.array([h.to_unconstrained() for h in vertices])


def tune_baseline(training_set: Sequence[QuadraticProblem], cfg: TunerConfig) -> TuneResult:
    """Nelder-Mead over ``(log eta, logit mu, log delta)`` of the training-set objective."""
    obj = HyperObjective(training_set, cfg)
    start = NagHyperparams(*cfg.x0)
    if start.mu == 0 or start.delta == 0:
        raise ValueError("tuning starts need mu > 0 and delta > 0 (zero maps to -inf)")
    simplex = initial_simplex(start, cfg.init_perturbation)
    res = nelder_mead(obj, simplex[0], max_iters=cfg.max_iters, tol=cfg.tol, initial_simplex=simplex)
    hp = NagHyperparams.from_unconstrained(res.x)
    initial = hyper_objective(NagHyperparams(*cfg.x0), training_set, cfg, call=0)
    return TuneResult(hp, res.fun, initial, res.n_iter, res.n_fev)


def save_tuned(hp: NagHyperparams, path, seed: int = 0, config_hash: str = "", objective: float | None = None) -> Path:
    path = Path(path)
    rec = {"format_version": FORMAT_VERSION, "eta1": hp.eta1, "mu": hp.mu, "delta": hp.delta,
           "seed": int(seed), "config_hash": config_hash, "objective": objective}
    path.write_text(json.dumps(rec, indent=2) + "\n")
    return path


def load_tuned(path) -> tuple[NagHyperparams, dict]:
    rec = json.loads(Path(path).read_text())
    if rec.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported tuned-parameter format version {rec.get('format_version')}")
    return NagHyperparams(float(rec["eta1"]), float(rec["mu"]), float(rec["delta"])), rec
