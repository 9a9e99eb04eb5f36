import numpy as np
import pytest

from susopt.problem import QuadraticProblem, sample_problem_set


@pytest.fixture
def scalar_problem():
    """f(x) = x^2 - 2x + 1 = (x - 1)^2, i.e. A=[[2]], b=[2], c=1."""
    return QuadraticProblem.from_arrays([[2.0]], [2.0], c=1.0, x1=[0.0])


@pytest.fixture(scope="session")
def small_set():
    return sample_problem_set(5, (10.0, 100.0), 12, seed=123)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


_CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the terminal summary prints them all."""
    def record(number, ok: bool, detail: str) -> bool:
        _CRITERIA[str(number)] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA, key=lambda k: (int(k.rstrip("abcdefghijklmnopqrstuvwxyz-")), k)):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
