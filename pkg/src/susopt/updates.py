"""Primitive first-order update operators and the action sets built from them."""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np


class UpdateKind(str, enum.Enum):
    GD = "GD"
    NAG = "NAG"
    GURU = "GURU"


@dataclass(frozen=True)
class UpdateParams:
    eta: float = 0.0
    mu: float = 0.0
    delta: float = 0.0
    lb: float = 0.0
    ub: float = 0.0

    def step_size(self, k: int) -> float:
        """Exponentially decayed learning rate ``eta * exp(-delta * k)``."""
        return self.eta * math.exp(-self.delta * k)


@dataclass(frozen=True)
class Update:
    kind: UpdateKind
    params: UpdateParams

    def __post_init__(self):
        object.__setattr__(self, "kind", UpdateKind(self.kind))
        p = self.params
        if self.kind in (UpdateKind.GD, UpdateKind.NAG) and not p.eta > 0:
            raise ValueError(f"{self.kind.value} needs eta > 0, got {p.eta}")
        if self.kind is UpdateKind.NAG and not 0 <= p.mu < 1:
            raise ValueError(f"NAG needs 0 <= mu < 1, got {p.mu}")
        if p.delta < 0:
            raise ValueError(f"delta must be >= 0, got {p.delta}")
        if self.kind is UpdateKind.GURU and not p.lb < p.ub:
            raise ValueError(f"GURU needs lb < ub, got ({p.lb}, {p.ub})")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, **asdict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "Update":
        d = dict(d)
        kind = d.pop("kind")
        return cls(UpdateKind(kind), UpdateParams(**{k: float(v) for k, v in d.items()}))


def gd(eta: float, delta: float = 0.0) -> Update:
    return Update(UpdateKind.GD, UpdateParams(eta=eta, delta=delta))


def nag(eta: float, mu: float, delta: float = 0.0) -> Update:
    return Update(UpdateKind.NAG, UpdateParams(eta=eta, mu=mu, delta=delta))


def guru(lb: float, ub: float) -> Update:
    return Update(UpdateKind.GURU, UpdateParams(lb=lb, ub=ub))


class UpdateMemory:
    """Persistent position and velocity of a NAG update across calls."""

    __slots__ = ("v", "x_pos", "initialized")

    def __init__(self):
        self.v = None
        self.x_pos = None
        self.initialized = False

    def __repr__(self):
        return f"UpdateMemory(initialized={self.initialized}, v={self.v}, x_pos={self.x_pos})"


def reset_memory(mem: UpdateMemory) -> None:
    if mem.v is not None:
        mem.v = np.zeros_like(mem.v)
    mem.initialized = False


def gd_update(x: np.ndarray, g: np.ndarray, k: int, params: UpdateParams) -> np.ndarray:
    return x - params.step_size(k) * g


def nag_update(
    mem: UpdateMemory,
    x_tilde: np.ndarray,
    g: np.ndarray,
    k: int,
    params: UpdateParams,
    literal_interim: bool = False,
) -> np.ndarray:
    """One NAG step from the interim point ``x_tilde`` with gradient ``g`` taken there.

    Returns the next interim point ``x_pos + mu * v`` (look-ahead from the new
    position). ``literal_interim=True`` instead looks ahead from the old position.
    """
    if not mem.initialized:
        mem.v = np.zeros_like(x_tilde, dtype=float)
        mem.x_pos = np.array(x_tilde, dtype=float)
        mem.initialized = True
    mem.v = params.mu * mem.v - params.step_size(k) * g
    x_old = mem.x_pos
    mem.x_pos = x_old + mem.v
    base = x_old if literal_interim else mem.x_pos
    return base + params.mu * mem.v


def guru_update(d: int, params: UpdateParams, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(params.lb, params.ub, size=d)


class ActionSet(Sequence):
    """Ordered, immutable collection of updates; action ``a`` (1-based) selects entry ``a``."""

    def __init__(self, entries: Iterable[Update], name: str = "custom"):
        self.entries = tuple(entries)
        self.name = name
        if not self.entries:
            raise ValueError("an action set needs at least one entry")

    @property
    def J(self) -> int:
        return len(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __eq__(self, other):
        return isinstance(other, ActionSet) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return f"ActionSet({self.name!r}, {[e.to_dict() for e in self.entries]})"

    def entry(self, a: int) -> Update:
        if not 1 <= a <= self.J:
            raise IndexError(f"action {a} out of range 1..{self.J}")
        return self.entries[a - 1]

    def to_records(self) -> list[dict]:
        return [e.to_dict() for e in self.entries]

    @classmethod
    def from_records(cls, records: Sequence[dict], name: str = "custom") -> "ActionSet":
        return cls((Update.from_dict(r) for r in records), name=name)

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_records(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def make_action_set(variant: str, tuned: Sequence[float] | None = None) -> ActionSet:
    """Build one of the action sets ``H1``, ``H2`` or ``H3``.

    ``tuned`` is ``(eta*, mu*, delta*)`` of the tuned NAG baseline; ``H3`` ignores it.
    """
    variant = variant.upper()
    if variant == "H3":
        return ActionSet(
            [guru(-1.0, 1.0), gd(0.003), gd(0.001), nag(0.0006, 0.6, 0.0001)],
            name="H3",
        )
    if variant not in ("H1", "H2"):
        raise ValueError(f"unknown action-set variant {variant!r}")
    if tuned is None:
        raise ValueError(f"{variant} needs tuned (eta, mu, delta)")
    eta, mu, delta = (float(t) for t in tuned)
    scales = (0.5, 1.0) if variant == "H1" else (0.25, 0.5, 1.0, 2.0)
    return ActionSet([nag(s * eta, mu, delta) for s in scales], name=variant)
