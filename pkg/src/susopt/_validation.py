"""Input validation helpers shared by the estimators."""
from __future__ import annotations

import numbers

import numpy as np

from .problem import ProblemSet, QuadraticProblem


def check_problems(X, *, min_count: int = 1) -> list[QuadraticProblem]:
    """Accept a problem, a :class:`ProblemSet` or an iterable of problems; return a list.

    All problems must share one dimension.
    """
    if isinstance(X, QuadraticProblem):
        problems = [X]
    elif isinstance(X, ProblemSet):
        problems = list(X.instances)
    else:
        try:
            problems = list(X)
        except TypeError:
            raise TypeError(f"expected quadratic problems, got {type(X).__name__}") from None
    bad = [type(p).__name__ for p in problems if not isinstance(p, QuadraticProblem)]
    if bad:
        raise TypeError(f"expected QuadraticProblem instances, got {sorted(set(bad))}")
    if len(problems) < min_count:
        raise ValueError(f"need at least {min_count} problem(s), got {len(problems)}")
    dims = {p.dim for p in problems}
    if len(dims) > 1:
        raise ValueError(f"problems have mixed dimensions {sorted(dims)}")
    return problems


def check_generator(random_state) -> np.random.Generator:
    """Turn ``None``, an int seed, a SeedSequence or a Generator into a Generator."""
    if random_state is None or isinstance(random_state, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(random_state)
    if isinstance(random_state, np.random.Generator):
        return random_state
    raise ValueError(f"{random_state!r} cannot be used to seed a numpy Generator")


def seed_from(random_state) -> int:
    """Integer seed for deterministic sub-streams; draws one from a Generator if given."""
    if isinstance(random_state, numbers.Integral):
        return int(random_state)
    return int(check_generator(random_state).integers(2**63))


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
