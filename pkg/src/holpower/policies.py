"""Power controllers sharing one decision interface.

A controller is built for one :class:`SystemSpec` and answers
``choose(b, d, i, u)`` with an index into the power set, where ``i`` is the
0-based observed interference index and ``u`` a uniform draw from the
policy's own random stream (ignored unless ``uses_randomness``).

``choose_many`` is the same decision for many trajectories at once: the
arguments are integer arrays and ``rows`` names the trajectories they belong
to, so controllers with per-packet state can keep one slot per trajectory.
It must agree exactly with ``choose`` called trajectory by trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .analytics import gamma_from_weight, sgn, tb0
from .dp import PolicyTable, solve
from .model import SystemSpec

POLICY_KINDS = ("table", "min", "max", "avg", "slbpc1", "slbpc2")


class Policy:
    kind = ""
    uses_randomness = False

    def __init__(self, spec: SystemSpec):
        self.spec = spec
        self.powers = spec.powers

    def reset(self) -> None:
        """Clear per-trajectory state."""

    def choose(self, b: int, d: int, i: int, u: float | None = None) -> int:
        raise NotImplementedError

    def reset_many(self, n: int) -> None:
        """Clear per-trajectory state for ``n`` trajectories."""

    def choose_many(self, b, d, i, u, rows) -> np.ndarray:
        raise NotImplementedError

    def decide(self, b: int, d: int, i: int, u: float | None = None) -> float:
        if b < 1:
            raise ValueError("no decision is made with an empty buffer")
        return self.powers[self.choose(b, d, i, u)]


class MinPolicy(Policy):
    kind = "min"

    def choose(self, b, d, i, u=None):
        return 0

    def choose_many(self, b, d, i, u, rows):
        return np.zeros(len(b), dtype=np.int64)


class MaxPolicy(Policy):
    kind = "max"

    def choose(self, b, d, i, u=None):
        return len(self.powers) - 1

    def choose_many(self, b, d, i, u, rows):
        return np.full(len(b), len(self.powers) - 1, dtype=np.int64)


class AvgPolicy(Policy):
    """Minimum power with probability ``alpha``, else maximum; redrawn every slot."""

    kind = "avg"
    uses_randomness = True

    def __init__(self, spec, alpha: float):
        super().__init__(spec)
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        self.alpha = alpha
        self._top = len(spec.powers) - 1

    def choose(self, b, d, i, u=None):
        return 0 if u < self.alpha else self._top

    def choose_many(self, b, d, i, u, rows):
        return np.where(u < self.alpha, 0, self._top)


class TablePolicy(Policy):
    """Lookup in a solved policy table; backlog is clamped to the solved range."""

    kind = "table"

    def __init__(self, spec, table: PolicyTable):
        super().__init__(spec)
        if tuple(table.powers) != spec.powers.levels:
            raise ValueError("policy table was solved for a different power set")
        self.table = table
        self._lookup = table.index.tolist()
        self._index = np.asarray(table.index)
        self._B = table.B

    def choose(self, b, d, i, u=None):
        if b < 1:
            raise ValueError("table lookup needs backlog >= 1")
        return self._lookup[min(b, self._B)][d - 1][i]

    def choose_many(self, b, d, i, u, rows):
        return self._index[np.minimum(b, self._B), d - 1, i]


class SLBPC1(Policy):
    """Backlog-only control: the power level nearest the relaxed minimizer at ``d = 2``."""

    kind = "slbpc1"

    def __init__(self, spec, k_slope: float | None = None, i_ref: float | None = None):
        super().__init__(spec)
        if k_slope is None:
            k_slope = spec.costs.power_slope
            if k_slope is None:
                raise ValueError("SLBPC needs k_slope when the power cost is not linear")
        if i_ref is None:
            i_ref = min(spec.interference.levels)
        self.k_slope = float(k_slope)
        self.i_ref = float(i_ref)
        self._gamma_hat: list[int] = [0]

    def gamma(self, b: int) -> float:
        weight = self.spec.costs.drop_cost + tb0(self.spec, b, self.i_ref)
        return gamma_from_weight(self.spec.success, self.i_ref, self.k_slope, weight)

    def gamma_hat(self, b: int) -> int:
        cache = self._gamma_hat
        while len(cache) <= b:
            cache.append(self.powers.nearest_index(self.gamma(len(cache))))
        return cache[b]

    def choose(self, b, d, i, u=None):
        return self.gamma_hat(b)

    def gamma_hat_array(self, top: int) -> np.ndarray:
        arr = getattr(self, "_gamma_hat_arr", None)
        if arr is None or len(arr) <= top:
            self.gamma_hat(max(top, 2 * len(self._gamma_hat)))
            arr = self._gamma_hat_arr = np.asarray(self._gamma_hat)
        return arr

    def choose_many(self, b, d, i, u, rows):
        return self.gamma_hat_array(int(b.max()))[b]


class SLBPC2(SLBPC1):
    """SLBPC1 start for every new head-of-line packet, then a random walk on
    failures: one level toward ``sgn(f_b(i))`` with probability ``p_change``."""

    kind = "slbpc2"
    uses_randomness = True

    def __init__(self, spec, k_slope=None, i_ref=None, p_change: float | None = None):
        super().__init__(spec, k_slope, i_ref)
        if p_change is None:
            p_change = 1.0 / (2 * spec.D)
        if not 0.0 <= p_change <= 1.0:
            raise ValueError("p_change must lie in [0, 1]")
        self.p_change = float(p_change)
        self.current: int | None = None
        self._signs: dict[tuple[int, int], int] = {}
        self._top = len(spec.powers) - 1

    def reset(self):
        self.current = None

    def reset_many(self, n):
        self._current = np.zeros(n, dtype=np.int64)
        self._started = np.zeros(n, dtype=bool)

    def drift(self, b: int, i: int) -> int:
        key = (b, i)
        sign = self._signs.get(key)
        if sign is None:
            sign = sgn(tb0(self.spec, b, self.spec.interference.levels[i]))
            self._signs[key] = sign
        return sign

    def choose(self, b, d, i, u=None):
        if d == self.spec.D or self.current is None:
            self.current = self.gamma_hat(b)
        elif u < self.p_change:
            self.current = min(max(self.current + self.drift(b, i), 0), self._top)
        return self.current

    def drift_array(self, top: int) -> np.ndarray:
        """``sgn(f_b(i))`` for ``b = 0..top`` or beyond (row 0 unused)."""
        arr = getattr(self, "_drift_arr", None)
        if arr is None or len(arr) <= top:
            n, top = self.spec.n_states, max(top, 2 * (0 if arr is None else len(arr)))
            arr = self._drift_arr = np.array(
                [[0] * n] + [[self.drift(b, k) for k in range(n)] for b in range(1, top + 1)],
                dtype=np.int64,
            )
        return arr

    def choose_many(self, b, d, i, u, rows):
        top = int(b.max())
        cur = self._current[rows]
        fresh = (d == self.spec.D) | ~self._started[rows]
        cur = np.where(fresh, self.gamma_hat_array(top)[b], cur)
        move = ~fresh & (u < self.p_change)
        step = self.drift_array(top)[b, i]
        cur = np.where(move, np.clip(cur + step, 0, self._top), cur)
        self._current[rows] = cur
        self._started[rows] = True
        return cur


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    alpha: float | None = None
    k_slope: float | None = None
    i_ref: float | None = None
    p_change: float | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "avg" and self.alpha is None:
            raise ValueError("avg policy needs alpha")

    @property
    def label(self) -> str:
        return self.kind

    def build(self, spec: SystemSpec, table: PolicyTable | None = None) -> Policy:
        if self.kind == "min":
            return MinPolicy(spec)
        if self.kind == "max":
            return MaxPolicy(spec)
        if self.kind == "avg":
            return AvgPolicy(spec, self.alpha)
        if self.kind == "slbpc1":
            return SLBPC1(spec, self.k_slope, self.i_ref)
        if self.kind == "slbpc2":
            return SLBPC2(spec, self.k_slope, self.i_ref, self.p_change)
        if table is None:
            table = solve(replace(spec, arrival_prob=0.0))[1]
        return TablePolicy(spec, table)
