"""Random convex quadratic problem class.

Instances have the form ``f(x) = 1/2 x^T A x - b^T x + c`` with ``A`` symmetric
positive definite of prescribed condition number and ``c = 1/2 b^T A^{-1} b`` so
that the minimum value is exactly zero.

Problem-set files are ``.npz`` archives with the following arrays:

``format_version`` (int64 scalar), ``d``, ``n``, ``seed`` (int64/uint64 scalars),
``kappa_spec`` (float64 ``[lo, hi]``), ``role`` (unicode scalar),
``A`` (``n x d x d``, row-major float64), ``b``, ``x1`` (``n x d``), ``c`` and
``kappa`` (``n``). All floats are stored at full precision so a round trip is
bit-exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

FORMAT_VERSION = 1


class ProblemGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class KappaSpec:
    """Condition number: fixed (``lo == hi``) or uniform on ``[lo, hi]``."""

    lo: float
    hi: float | None = None

    def __post_init__(self):
        hi = self.lo if self.hi is None else self.hi
        object.__setattr__(self, "hi", float(hi))
        object.__setattr__(self, "lo", float(self.lo))
        if not 1.0 <= self.lo <= self.hi:
            raise ValueError(f"need 1 <= kappa_lo <= kappa_hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def fixed(cls, kappa: float) -> "KappaSpec":
        return cls(kappa, kappa)

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "KappaSpec":
        return cls(lo, hi)

    @classmethod
    def coerce(cls, value) -> "KappaSpec":
        if isinstance(value, KappaSpec):
            return value
        if np.isscalar(value):
            return cls.fixed(float(value))
        lo, hi = value
        return cls(float(lo), float(hi))

    @property
    def is_fixed(self) -> bool:
        return self.lo == self.hi

    def draw(self, rng: np.random.Generator) -> float:
        if self.is_fixed:
            return self.lo
        return float(rng.uniform(self.lo, self.hi))

    def as_list(self) -> list[float]:
        return [self.lo, self.hi]


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    A: np.ndarray
    b: np.ndarray
    c: float
    x1: np.ndarray
    kappa: float
    x_star: np.ndarray = field(repr=False)
    lambda_min: float
    lambda_max: float

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @property
    def lipschitz(self) -> float:
        return self.lambda_max

    @classmethod
    def from_arrays(cls, A, b, c=None, x1=None) -> "QuadraticProblem":
        """Build an instance from explicit data; ``c`` defaults to ``1/2 b^T A^{-1} b``."""
        A = np.array(A, dtype=float, ndmin=2)
        b = np.array(b, dtype=float, ndmin=1)
        d = b.shape[0]
        if A.shape != (d, d):
            raise ValueError(f"A has shape {A.shape}, expected {(d, d)}")
        try:
            x_star = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise ProblemGenerationError("A is numerically singular") from exc
        eig = np.linalg.eigvalsh(A)
        if eig[0] <= 0:
            raise ProblemGenerationError("A is not positive definite")
        if c is None:
            c = 0.5 * float(b @ x_star)
        x1 = np.zeros(d) if x1 is None else np.array(x1, dtype=float, ndmin=1)
        for arr in (A, b, x_star, x1):
            arr.setflags(write=False)
        return cls(
            A=A,
            b=b,
            c=float(c),
            x1=x1,
            kappa=float(eig[-1] / eig[0]),
            x_star=x_star,
            lambda_min=float(eig[0]),
            lambda_max=float(eig[-1]),
        )

    def __eq__(self, other):
        if not isinstance(other, QuadraticProblem):
            return NotImplemented
        return (
            np.array_equal(self.A, other.A)
            and np.array_equal(self.b, other.b)
            and self.c == other.c
            and np.array_equal(self.x1, other.x1)
        )

    __hash__ = None


def _check_x(p: QuadraticProblem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dim,):
        raise ValueError(f"x has shape {x.shape}, expected ({p.dim},)")
    return x


def evaluate(p: QuadraticProblem, x) -> float:
    """Objective value.

    Computed as ``1/2 (x - x*)^T (A x - b)``, algebraically identical to
    ``1/2 x^T A x - b^T x + c`` but free of cancellation near the optimum.
    """
    x = _check_x(p, x)
    return 0.5 * float((x - p.x_star) @ (p.A @ x - p.b))


def gradient(p: QuadraticProblem, x) -> np.ndarray:
    x = _check_x(p, x)
    return p.A @ x - p.b


def value_and_grad(p: QuadraticProblem, x: np.ndarray) -> tuple[float, np.ndarray]:
    """One objective/gradient evaluation sharing a single mat-vec. No input checks."""
    g = p.A @ x - p.b
    return 0.5 * float((x - p.x_star) @ g), g


def make_spd_matrix(d: int, kappa: float, rng: np.random.Generator) -> np.ndarray:
    """Random SPD matrix with eigenvalues log-uniformly spaced on ``[1, kappa]``."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not kappa >= 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    # d == 1 admits only kappa == 1
    lam = np.logspace(0.0, np.log10(kappa), d)
    lam[0] = 1.0
    if d > 1:
        lam[-1] = float(kappa)
    A = (Q * lam) @ Q.T
    return 0.5 * (A + A.T)


def make_problem(d: int, kappa_spec, rng: np.random.Generator) -> QuadraticProblem:
    kappa_spec = KappaSpec.coerce(kappa_spec)
    kappa = kappa_spec.draw(rng)
    A = make_spd_matrix(d, kappa, rng)
    b = rng.standard_normal(d)
    x1 = rng.standard_normal(d)
    return QuadraticProblem.from_arrays(A, b, x1=x1)


@dataclass(frozen=True, eq=False)
class ProblemSet(Sequence):
    instances: tuple[QuadraticProblem, ...]
    d: int
    kappa_spec: KappaSpec
    seed: int
    role: str = "training"

    def __len__(self) -> int:
        return len(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    def __iter__(self) -> Iterator[QuadraticProblem]:
        return iter(self.instances)

    def __eq__(self, other):
        if not isinstance(other, ProblemSet):
            return NotImplemented
        return (
            self.d == other.d
            and self.kappa_spec == other.kappa_spec
            and self.seed == other.seed
            and self.role == other.role
            and len(self) == len(other)
            and all(p == q for p, q in zip(self, other))
        )

    __hash__ = None


def sample_problem_set(d: int, kappa_spec, n: int, seed: int, role: str = "training") -> ProblemSet:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if role not in ("training", "test"):
        raise ValueError(f"role must be 'training' or 'test', got {role!r}")
    kappa_spec = KappaSpec.coerce(kappa_spec)
    rng = np.random.default_rng(seed)
    instances = tuple(make_problem(d, kappa_spec, rng) for _ in range(n))
    return ProblemSet(instances, d=d, kappa_spec=kappa_spec, seed=int(seed), role=role)


def save_problem_set(ps: ProblemSet, path) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            format_version=np.int64(FORMAT_VERSION),
            d=np.int64(ps.d),
            n=np.int64(len(ps)),
            seed=np.uint64(ps.seed),
            kappa_spec=np.array(ps.kappa_spec.as_list()),
            role=np.array(ps.role),
            A=np.stack([p.A for p in ps]),
            b=np.stack([p.b for p in ps]),
            c=np.array([p.c for p in ps]),
            x1=np.stack([p.x1 for p in ps]),
            kappa=np.array([p.kappa for p in ps]),
        )
    return path


def load_problem_set(path) -> ProblemSet:
    with np.load(Path(path), allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported problem-set format version {version}")
        d, n = int(z["d"]), int(z["n"])
        A, b, c, x1 = z["A"], z["b"], z["c"], z["x1"]
        if A.shape != (n, d, d) or b.shape != (n, d) or x1.shape != (n, d):
            raise ValueError(f"{path}: array shapes inconsistent with header d={d}, n={n}")
        instances = tuple(
            QuadraticProblem.from_arrays(A[i], b[i], c=c[i], x1=x1[i]) for i in range(n)
        )
        lo, hi = z["kappa_spec"]
        return ProblemSet(
            instances,
            d=d,
            kappa_spec=KappaSpec(float(lo), float(hi)),
            seed=int(z["seed"]),
            role=str(z["role"]),
        )
