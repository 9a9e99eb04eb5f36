"""Tabular SARSA agent over (objective-level, budget-fraction) states.

States and actions are 1-based throughout the public API, matching the bin
formulas of the environment; arrays are indexed 0-based internally.

Q-table files are ``.npz`` archives holding ``format_version``, the fingerprint
fields ``m1``, ``m2``, ``J``, ``gamma``, ``action_set_hash`` and the ``values``
array of shape ``(m1, m2, J)``. Policy files hold the same fingerprint plus an
``actions`` array of shape ``(m1, m2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class FingerprintMismatch(ValueError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    eps0: float = 0.99
    alpha0: float = 0.3
    gamma: float = 1.0
    N: int = 12800
    final_fraction: float = 0.005

    def __post_init__(self):
        if not 0 <= self.eps0 <= 1:
            raise ValueError(f"eps0 must lie in [0, 1], got {self.eps0}")
        if not self.alpha0 > 0:
            raise ValueError(f"alpha0 must be > 0, got {self.alpha0}")
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.N < 0:
            raise ValueError(f"N must be >= 0, got {self.N}")
        if not 0 < self.final_fraction <= 1:
            raise ValueError(f"final_fraction must lie in (0, 1], got {self.final_fraction}")


@dataclass(frozen=True)
class Fingerprint:
    m1: int
    m2: int
    J: int
    gamma: float
    action_set_hash: str

    def check(self, other: "Fingerprint", what: str = "table") -> None:
        if self != other:
            raise FingerprintMismatch(f"{what} fingerprint mismatch: expected {other}, found {self}")


class QTable:
    def __init__(self, m1: int, m2: int, J: int, gamma: float = 1.0, action_set_hash: str = "",
                 values: np.ndarray | None = None):
        self.fingerprint = Fingerprint(int(m1), int(m2), int(J), float(gamma), str(action_set_hash))
        if values is None:
            values = np.zeros((m1, m2, J))
        values = np.asarray(values, dtype=float)
        if values.shape != (m1, m2, J):
            raise ValueError(f"values have shape {values.shape}, expected {(m1, m2, J)}")
        self.values = values

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def J(self) -> int:
        return self.fingerprint.J

    def row(self, s: tuple[int, int]) -> np.ndarray:
        return self.values[s[0] - 1, s[1] - 1]

    def __getitem__(self, key):
        (s1, s2), a = key
        return self.values[s1 - 1, s2 - 1, a - 1]

    def __setitem__(self, key, value):
        (s1, s2), a = key
        self.values[s1 - 1, s2 - 1, a - 1] = value

    def copy(self) -> "QTable":
        fp = self.fingerprint
        return QTable(fp.m1, fp.m2, fp.J, fp.gamma, fp.action_set_hash, self.values.copy())

    def save(self, path) -> Path:
        path = Path(path)
        with open(path, "wb") as fh:
            np.savez(fh, format_version=np.int64(FORMAT_VERSION), values=self.values, **_fp_arrays(self.fingerprint))
        return path

    @classmethod
    def load(cls, path, expected: Fingerprint | None = None) -> "QTable":
        with np.load(Path(path), allow_pickle=False) as z:
            fp = _read_fp(z, path)
            q = cls(fp.m1, fp.m2, fp.J, fp.gamma, fp.action_set_hash, z["values"])
        if expected is not None:
            fp.check(expected, f"Q-table {path}")
        return q


@dataclass
class PolicyTable:
    actions: np.ndarray
    fingerprint: Fingerprint

    def __call__(self, s: tuple[int, int]) -> int:
        return int(self.actions[s[0] - 1, s[1] - 1])

    def save(self, path) -> Path:
        path = Path(path)
        with open(path, "wb") as fh:
            np.savez(fh, format_version=np.int64(FORMAT_VERSION), actions=self.actions, **_fp_arrays(self.fingerprint))
        return path

    @classmethod
    def load(cls, path, expected: Fingerprint | None = None) -> "PolicyTable":
        with np.load(Path(path), allow_pickle=False) as z:
            fp = _read_fp(z, path)
            actions = z["actions"]
        if actions.shape != (fp.m1, fp.m2):
            raise ValueError(f"{path}: policy shape {actions.shape} does not match header")
        if expected is not None:
            fp.check(expected, f"policy {path}")
        return cls(actions, fp)

    def to_csv(self, path) -> Path:
        """Write the policy as a grid: one row per level bin, one column per budget bin."""
        path = Path(path)
        m2 = self.actions.shape[1]
        lines = ["s1," + ",".join(f"s2={j}" for j in range(1, m2 + 1))]
        for i, row in enumerate(self.actions, start=1):
            lines.append(f"{i}," + ",".join(str(int(a)) for a in row))
        path.write_text("\n".join(lines) + "\n")
        return path


def _fp_arrays(fp: Fingerprint) -> dict:
    return dict(m1=np.int64(fp.m1), m2=np.int64(fp.m2), J=np.int64(fp.J),
                gamma=np.float64(fp.gamma), action_set_hash=np.array(fp.action_set_hash))


def _read_fp(z, path) -> Fingerprint:
    version = int(z["format_version"])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    return Fingerprint(int(z["m1"]), int(z["m2"]), int(z["J"]), float(z["gamma"]), str(z["action_set_hash"]))


def select_action(q: QTable, s: tuple[int, int], eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; greedy ties go to the lowest action index."""
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(q.J)) + 1
    return int(np.argmax(q.values[s[0] - 1, s[1] - 1])) + 1


def sarsa_update(q: QTable, s, a: int, r_next: float, s_next, a_next: int, alpha: float, gamma: float) -> None:
    i, j = s[0] - 1, s[1] - 1
    target = r_next + gamma * q.values[s_next[0] - 1, s_next[1] - 1, a_next - 1]
    q.values[i, j, a - 1] = (1 - alpha) * q.values[i, j, a - 1] + alpha * target


def sarsa_update_terminal(q: QTable, s, a: int, r_next: float, alpha: float) -> None:
    i, j = s[0] - 1, s[1] - 1
    q.values[i, j, a - 1] = (1 - alpha) * q.values[i, j, a - 1] + alpha * r_next


def schedule_value(v0: float, n: int, cfg: AgentConfig) -> float:
    """Exponential decay from ``v0`` at episode 0 to ``final_fraction * v0`` at episode ``N``."""
    return v0 * math.exp(-(n / cfg.N) * math.log(1.0 / cfg.final_fraction))


def greedy_policy(q: QTable) -> PolicyTable:
    return PolicyTable(np.argmax(q.values, axis=2).astype(np.int64) + 1, q.fingerprint)
