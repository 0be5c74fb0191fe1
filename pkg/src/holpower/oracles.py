"""Independent reference computations used by ``verify`` and the test suite.

Policy evaluation here builds the full transient transition matrix and solves
the linear system directly; it never touches the backward recursion in
:mod:`holpower.dp`.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .model import (
    CostModel,
    InterferenceChain,
    LinearCost,
    PowerSet,
    SuccessFunction,
    SystemSpec,
    TableCost,
)

MAX_ENUMERATED_POLICIES = 200_000


def state_list(spec: SystemSpec) -> list[tuple[int, int, int]]:
    return [
        (b, d, i)
        for b in range(1, spec.B + 1)
        for d in range(1, spec.D + 1)
        for i in range(spec.n_states)
    ]


def _per_action_model(spec: SystemSpec):
    """Expected stage cost and transient transition rows for every (action, state)."""
    states = state_list(spec)
    where = {x: n for n, x in enumerate(states)}
    P = spec.interference.matrix
    S = spec.success_matrix
    n, m = len(states), len(spec.powers)
    cost = np.zeros((m, n))
    trans = np.zeros((m, n, n))
    for n_x, (b, d, i) in enumerate(states):
        for k in range(m):
            s = S[k, i]
            cost[k, n_x] = spec.costs.backlog(b) + spec.power_costs[k] + (1 - s) * (d == 1) * spec.costs.drop_cost
            for j in range(spec.n_states):
                if b > 1:
                    trans[k, n_x, where[(b - 1, spec.D, j)]] += s * P[i, j]
                    if d == 1:
                        trans[k, n_x, where[(b - 1, spec.D, j)]] += (1 - s) * P[i, j]
                if d > 1:
                    trans[k, n_x, where[(b, d - 1, j)]] += (1 - s) * P[i, j]
    return states, cost, trans


def evaluate_policies(spec: SystemSpec, actions: np.ndarray) -> np.ndarray:
    """Exact expected total cost of each deterministic stationary policy.

    ``actions`` has shape ``(n_policies, n_states)`` holding power indices in
    :func:`state_list` order; the result has the same shape.
    """
    states, cost, trans = _per_action_model(spec)
    actions = np.atleast_2d(actions)
    cols = np.arange(len(states))
    Q = trans[actions, cols]
    g = cost[actions, cols]
    eye = np.eye(len(states))
    return np.linalg.solve(eye - Q, g[..., None])[..., 0]


def brute_force_values(spec: SystemSpec) -> dict[tuple[int, int, int], float]:
    """Minimum over all deterministic stationary policies, per state."""
    n = spec.B * spec.D * spec.n_states
    m = len(spec.powers)
    if m**n > MAX_ENUMERATED_POLICIES:
        raise ValueError(f"{m}**{n} policies is too many to enumerate")
    actions = np.array(list(itertools.product(range(m), repeat=n)), dtype=np.int64)
    best = np.full(n, np.inf)
    for lo in range(0, len(actions), 20_000):
        best = np.minimum(best, evaluate_policies(spec, actions[lo : lo + 20_000]).min(axis=0))
    return dict(zip(state_list(spec), best.tolist()))


def _increasing(rng: np.random.Generator, n: int, scale: float) -> tuple[float, ...]:
    return tuple(np.cumsum(rng.uniform(0, scale, n)).tolist())


def random_success(rng: np.random.Generator) -> SuccessFunction:
    family = rng.choice(["exponential", "ratio", "sigmoidal"])
    if family == "exponential":
        return SuccessFunction("exponential", scale=float(rng.uniform(0.2, 3.0)))
    if family == "ratio":
        return SuccessFunction("ratio")
    return SuccessFunction(
        "sigmoidal",
        beta0=float(rng.uniform(0.3, 3.0)),
        beta1=float(rng.uniform(0.0, math.log(2.0))),
        beta2=float(rng.uniform(1.0, 6.0)),
    )


def random_instance(
    rng: np.random.Generator,
    *,
    max_product: int = 8,
    max_powers: int = 3,
    n_states: int | None = None,
    B: int | None = None,
    D: int | None = None,
    linear_power: bool = False,
) -> SystemSpec:
    """Random instance with non-decreasing costs and ``B * D * I <= max_product``."""
    while True:
        n = n_states or int(rng.integers(1, 3))
        b = B or int(rng.integers(1, max_product + 1))
        d = D or int(rng.integers(1, max_product + 1))
        if b * d * n <= max_product:
            break
    m = int(rng.integers(1, max_powers + 1))
    powers = PowerSet(tuple(sorted(set(np.round(rng.uniform(0.1, 5.0, m), 6).tolist()))))
    if linear_power:
        power_cost = LinearCost(float(rng.uniform(0.05, 3.0)))
    else:
        power_cost = TableCost(_increasing(rng, len(powers), 3.0))
    backlog_cost = TableCost((0.0,) + _increasing(rng, b, 2.0))
    costs = CostModel(power_cost, backlog_cost, float(rng.uniform(0.0, 30.0)))
    levels = tuple(np.round(rng.uniform(0.5, 4.0, n), 6).tolist())
    raw = rng.uniform(0.05, 1.0, (n, n))
    rows = raw / raw.sum(axis=1, keepdims=True)
    rows[:, -1] = 1.0 - rows[:, :-1].sum(axis=1)
    chain = InterferenceChain(levels, tuple(map(tuple, rows.tolist())))
    return SystemSpec(b, d, powers, costs, random_success(rng), chain)
