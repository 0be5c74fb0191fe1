"""Exact optimal cost-to-go and the smallest-power optimal policy.

Arrays are indexed ``[b, d - 1, i]`` with ``b`` in ``0..B``, ``d`` in
``1..D`` and ``i`` the 0-based interference index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemSpec

TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ValueTable:
    values: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def B(self) -> int:
        return self.values.shape[0] - 1

    @property
    def D(self) -> int:
        return self.values.shape[1]

    def __call__(self, b: int, d: int, i: int = 0) -> float:
        return float(self.values[b, d - 1, i])

    def rows(self):
        """``(b, d, i, value)`` rows with 1-based ``i``."""
        B, D, n = self.values.shape
        for b in range(B):
            for d in range(1, D + 1):
                for i in range(n):
                    yield b, d, i + 1, float(self.values[b, d - 1, i])


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Chosen power index per state; row ``b = 0`` is unused and holds -1."""

    powers: tuple[float, ...]
    index: np.ndarray

    def __post_init__(self):
        self.index.setflags(write=False)

    @property
    def B(self) -> int:
        return self.index.shape[0] - 1

    @property
    def D(self) -> int:
        return self.index.shape[1]

    @property
    def power_array(self) -> np.ndarray:
        out = np.full(self.index.shape, np.nan)
        out[1:] = np.asarray(self.powers)[self.index[1:]]
        return out

    def __call__(self, b: int, d: int, i: int = 0) -> float:
        if not 1 <= b <= self.B:
            raise IndexError(f"backlog {b} outside solved range 1..{self.B}")
        return self.powers[self.index[b, d - 1, i]]

    def rows(self):
        B, D, n = self.index.shape
        for b in range(1, B):
            for d in range(1, D + 1):
                for i in range(n):
                    yield b, d, i + 1, self.powers[self.index[b, d - 1, i]]


def _check_dims(spec: SystemSpec, values: np.ndarray) -> None:
    expected = (spec.B + 1, spec.D, spec.n_states)
    if values.shape != expected:
        raise ValueError(f"value table has shape {values.shape}, expected {expected}")


def q_values(spec: SystemSpec, values: np.ndarray, b: int, d: int) -> np.ndarray:
    """Right-hand side of the Bellman equation before minimization.

    Returns an array of shape ``(n_powers, n_states)``.
    """
    P = spec.interference.matrix
    S = spec.success_matrix
    after_departure = P @ values[b - 1, spec.D - 1]
    if d == 1:
        after_failure = spec.costs.drop_cost + after_departure
    else:
        after_failure = P @ values[b, d - 2]
    base = spec.costs.backlog(b) + spec.power_costs[:, None]
    return base + S * after_departure[None, :] + (1.0 - S) * after_failure[None, :]


def smallest_argmin(q: np.ndarray) -> np.ndarray:
    """Smallest index attaining the column-wise minimum within ``TIE_TOL``."""
    qmin = q.min(axis=0)
    return np.argmax(q <= qmin + TIE_TOL, axis=0)


def solve(spec: SystemSpec) -> tuple[ValueTable, PolicyTable]:
    """Backward recursion over ``b = 1..B`` then ``d = 1..D``.

    ``(b, 1, .)`` only needs level ``b - 1`` and ``(b, d, .)`` needs
    ``(b, d - 1, .)`` plus level ``b - 1``, so a single sweep is exact.
    """
    if spec.arrival_prob > 0:
        raise ValueError("the DP is only defined without arrivals (arrival_prob must be 0)")
    B, D, n = spec.B, spec.D, spec.n_states
    values = np.zeros((B + 1, D, n))
    index = np.full((B + 1, D, n), -1, dtype=np.int64)
    cols = np.arange(n)
    for b in range(1, B + 1):
        for d in range(1, D + 1):
            q = q_values(spec, values, b, d)
            best = smallest_argmin(q)
            index[b, d - 1] = best
            values[b, d - 1] = q[best, cols]
    return ValueTable(values), PolicyTable(spec.powers.levels, index)


def bellman_residual(spec: SystemSpec, v: ValueTable | np.ndarray) -> float:
    values = v.values if isinstance(v, ValueTable) else np.asarray(v, dtype=float)
    _check_dims(spec, values)
    worst = float(np.abs(values[0]).max())
    for b in range(1, spec.B + 1):
        for d in range(1, spec.D + 1):
            rhs = q_values(spec, values, b, d).min(axis=0)
            worst = max(worst, float(np.abs(rhs - values[b, d - 1]).max()))
    return worst


def greedy_policy(spec: SystemSpec, v: ValueTable | np.ndarray) -> PolicyTable:
    values = v.values if isinstance(v, ValueTable) else np.asarray(v, dtype=float)
    _check_dims(spec, values)
    index = np.full(values.shape, -1, dtype=np.int64)
    for b in range(1, spec.B + 1):
        for d in range(1, spec.D + 1):
            index[b, d - 1] = smallest_argmin(q_values(spec, values, b, d))
    return PolicyTable(spec.powers.levels, index)
