"""Problem-instance data: costs, success probabilities, interference chain, state.

Interference states are 0-indexed here; configs and CSV files use 1-based
indices (see :mod:`holpower.scenario`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

ROW_SUM_TOL = 1e-12
SUCCESS_FAMILIES = ("ratio", "exponential", "sigmoidal", "constant")


@dataclass(frozen=True)
class PowerSet:
    levels: tuple[float, ...]

    def __post_init__(self):
        levels = tuple(float(p) for p in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("power set must be non-empty")
        if any(p < 0 or not math.isfinite(p) for p in levels):
            raise ValueError("power levels must be finite and non-negative")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("power levels must be strictly ascending")

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    def __getitem__(self, k):
        return self.levels[k]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.levels)

    @property
    def min(self) -> float:
        return self.levels[0]

    @property
    def max(self) -> float:
        return self.levels[-1]

    def index(self, p: float) -> int:
        try:
            return self.levels.index(float(p))
        except ValueError:
            raise ValueError(f"{p!r} is not in the power set {self.levels}") from None

    def nearest_index(self, x: float) -> int:
        """Index of the level closest to ``x``; ties go to the smaller level."""
        best, best_dist = 0, abs(self.levels[0] - x)
        for k, p in enumerate(self.levels[1:], start=1):
            dist = abs(p - x)
            if dist < best_dist:
                best, best_dist = k, dist
        return best


@dataclass(frozen=True)
class LinearCost:
    """``cost(x) = slope * x``."""

    slope: float

    def __post_init__(self):
        if not self.slope >= 0:
            raise ValueError("linear cost slope must be non-negative")

    def __call__(self, x):
        return self.slope * x


@dataclass(frozen=True)
class TableCost:
    """Explicit cost table.

    As a backlog cost the table is indexed by ``b`` and holds its last value
    beyond the end. As a power cost it is aligned with the power levels.
    """

    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if not values:
            raise ValueError("cost table must be non-empty")
        if any(v < 0 for v in values):
            raise ValueError("cost table entries must be non-negative")
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("cost table must be non-decreasing")

    def __call__(self, k):
        return self.values[min(int(k), len(self.values) - 1)]


Cost = Union[LinearCost, TableCost]


@dataclass(frozen=True)
class CostModel:
    power_cost: Cost
    backlog_cost: Cost
    drop_cost: float

    def __post_init__(self):
        object.__setattr__(self, "drop_cost", float(self.drop_cost))
        if not self.drop_cost >= 0:
            raise ValueError("drop cost must be non-negative")

    def backlog(self, b: int) -> float:
        return float(self.backlog_cost(b)) if b > 0 else 0.0

    @property
    def power_slope(self) -> float | None:
        if isinstance(self.power_cost, LinearCost):
            return self.power_cost.slope
        return None


@dataclass(frozen=True)
class SuccessFunction:
    """Per-attempt success probability ``s(p, i)``.

    Families (``i`` is the physical interference level):

    * ``ratio``: ``p / (p + i)``
    * ``exponential``: ``1 - exp(-p / (scale * i))``
    * ``sigmoidal``: ``max(0, 1 - exp(-beta0 * p / i + beta1) / 2) ** beta2``
    * ``constant``: ``value`` regardless of ``(p, i)``
    """

    family: str
    scale: float = 1.0
    beta0: float = 1.0
    beta1: float = 0.0
    beta2: float = 1.0
    value: float = 1.0

    def __post_init__(self):
        if self.family not in SUCCESS_FAMILIES:
            raise ValueError(f"unknown success family {self.family!r}")
        if self.family == "exponential" and not self.scale > 0:
            raise ValueError("exponential scale must be positive")
        if self.family == "sigmoidal":
            if not (self.beta0 > 0 and self.beta2 > 0):
                raise ValueError("sigmoid beta0 and beta2 must be positive")
            if self.beta1 < 0:
                raise ValueError("sigmoid beta1 must be non-negative")
        if self.family == "constant" and not 0.0 <= self.value <= 1.0:
            raise ValueError("constant success value must lie in [0, 1]")

    @property
    def is_concave(self) -> bool:
        return self.family in ("ratio", "exponential", "constant")

    def __call__(self, p, i):
        p = np.asarray(p, dtype=float)
        i = np.asarray(i, dtype=float)
        if self.family == "ratio":
            with np.errstate(invalid="ignore"):
                out = np.where(p > 0, p / (p + i), 0.0)
        elif self.family == "exponential":
            out = -np.expm1(-p / (self.scale * i))
        elif self.family == "sigmoidal":
            base = 1.0 - 0.5 * np.exp(-self.beta0 * p / i + self.beta1)
            out = np.maximum(base, 0.0) ** self.beta2
        else:
            out = np.full(np.broadcast(p, i).shape, self.value)
        return out if out.ndim else float(out)

    def derivative(self, p, i):
        """Partial derivative of ``s`` with respect to ``p``."""
        p = np.asarray(p, dtype=float)
        i = np.asarray(i, dtype=float)
        if self.family == "ratio":
            out = i / (p + i) ** 2
        elif self.family == "exponential":
            c = self.scale * i
            out = np.exp(-p / c) / c
        elif self.family == "sigmoidal":
            u = 0.5 * np.exp(-self.beta0 * p / i + self.beta1)
            base = 1.0 - u
            with np.errstate(invalid="ignore", divide="ignore"):
                out = np.where(
                    base > 0,
                    self.beta2 * np.maximum(base, 0.0) ** (self.beta2 - 1) * u * self.beta0 / i,
                    0.0,
                )
        else:
            out = np.zeros(np.broadcast(p, i).shape)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class InterferenceChain:
    levels: tuple[float, ...]
    transition: tuple[tuple[float, ...], ...]
    subslots_per_slot: int = 1

    def __post_init__(self):
        levels = tuple(float(x) for x in self.levels)
        rows = tuple(tuple(float(x) for x in row) for row in self.transition)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "transition", rows)
        n = len(levels)
        if n == 0:
            raise ValueError("interference chain needs at least one state")
        if any(not x > 0 for x in levels):
            raise ValueError("interference levels must be strictly positive")
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValueError(f"transition matrix must be {n}x{n}")
        for k, row in enumerate(rows):
            if any(not 0.0 <= x <= 1.0 for x in row):
                raise ValueError(f"transition row {k + 1} has entries outside [0, 1]")
            if abs(math.fsum(row) - 1.0) > ROW_SUM_TOL:
                raise ValueError(f"transition row {k + 1} sums to {math.fsum(row)!r}, not 1")
        if int(self.subslots_per_slot) != self.subslots_per_slot or self.subslots_per_slot < 1:
            raise ValueError("subslots_per_slot must be a positive integer")

    @property
    def n_states(self) -> int:
        return len(self.levels)

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.array(self.transition)

    @cached_property
    def stationary(self) -> np.ndarray:
        """A stationary distribution (minimum-norm solution if not unique)."""
        n = self.n_states
        a = np.vstack([self.matrix.T - np.eye(n), np.ones((1, n))])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        pi = np.linalg.lstsq(a, rhs, rcond=None)[0]
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()


@dataclass(frozen=True)
class SystemSpec:
    B: int
    D: int
    powers: PowerSet
    costs: CostModel
    success: SuccessFunction
    interference: InterferenceChain
    arrival_prob: float = 0.0

    def __post_init__(self):
        if int(self.B) != self.B or self.B < 1:
            raise ValueError("B must be an integer >= 1")
        if int(self.D) != self.D or self.D < 1:
            raise ValueError("D must be an integer >= 1")
        if not 0.0 <= self.arrival_prob <= 1.0:
            raise ValueError("arrival_prob must lie in [0, 1]")
        pc = self.costs.power_cost
        if isinstance(pc, TableCost) and len(pc.values) != len(self.powers):
            raise ValueError("power cost table must have one entry per power level")

    @property
    def n_states(self) -> int:
        return self.interference.n_states

    @cached_property
    def power_costs(self) -> np.ndarray:
        """``C_p`` evaluated on every power level."""
        pc = self.costs.power_cost
        if isinstance(pc, LinearCost):
            return pc.slope * self.powers.array
        return np.array(pc.values)

    @cached_property
    def success_matrix(self) -> np.ndarray:
        """``s(p, i)`` with shape ``(n_powers, n_states)``."""
        p = self.powers.array[:, None]
        i = np.asarray(self.interference.levels)[None, :]
        return np.broadcast_to(self.success(p, i), (len(self.powers), self.n_states)).copy()

    def power_cost(self, p: float) -> float:
        return float(self.power_costs[self.powers.index(p)])


@dataclass(frozen=True)
class State:
    backlog: int
    residual_deadline: int
    interference_index: int = 0

    @property
    def terminal(self) -> bool:
        return self.backlog == 0


def success_prob(s: SuccessFunction, p: float, i: float) -> float:
    if p < 0 or not i > 0:
        raise ValueError("need p >= 0 and i > 0")
    return float(s(p, i))


def stage_cost(spec: SystemSpec, state: State, p: float, success: bool) -> float:
    if state.backlog == 0:
        return 0.0
    cost = spec.power_cost(p) + spec.costs.backlog(state.backlog)
    if not success and state.residual_deadline == 1:
        cost += spec.costs.drop_cost
    return cost


def step(spec: SystemSpec, state: State, success: bool, next_i: int) -> State:
    if state.backlog < 1:
        raise ValueError("cannot step a terminal state")
    if success or state.residual_deadline == 1:
        return State(state.backlog - 1, spec.D, next_i)
    return State(state.backlog, state.residual_deadline - 1, next_i)
