"""Seeded Monte Carlo evaluation of power controllers.

Seeding: replication ``r`` of a batch with base seed ``s`` uses
``SeedSequence(entropy=s, spawn_key=(r,))``. Its four spawned children drive,
in order, the success draws, the interference transitions, the policy's own
randomness and the arrivals. Each stream advances a fixed number of times per
slot, so swapping the controller leaves the channel sample path unchanged.

Batches run on a lockstep engine that advances a block of replications one
slot at a time with array operations. Because the per-slot draw counts are
fixed, replication ``r`` at slot ``t`` reads the same uniforms as the scalar
:func:`run_trajectory`, and the two engines produce identical records.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dp import PolicyTable, ValueTable
from .model import SystemSpec
from .policies import Policy, PolicyConfig, TablePolicy

CHUNK = 1024
LOG_COLUMNS = ("slot", "b", "d", "i_observed", "power", "success", "arrival", "stage_cost")


class _Uniforms:
    __slots__ = ("gen", "buf", "pos")

    def __init__(self, gen: np.random.Generator):
        self.gen = gen
        self.buf: list[float] = []
        self.pos = 0

    def __call__(self) -> float:
        if self.pos == len(self.buf):
            self.buf = self.gen.random(CHUNK).tolist()
            self.pos = 0
        x = self.buf[self.pos]
        self.pos += 1
        return x


def streams(base_seed: int, replication: int) -> list[np.random.Generator]:
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(replication),))
    return [np.random.Generator(np.random.PCG64(child)) for child in seq.spawn(4)]


def default_max_slots(spec: SystemSpec) -> int:
    return 100 * spec.B * spec.D


@dataclass(frozen=True)
class TrajectoryRecord:
    total_cost: float
    slots: int
    packets_departed: int
    packets_dropped: int
    total_power: float
    truncated: bool = False


class _Channel:
    """Per-spec lookup tables shared by every trajectory of a batch."""

    def __init__(self, spec: SystemSpec):
        self.levels = spec.interference.levels
        self.n = spec.interference.n_states
        self.sub = spec.interference.subslots_per_slot
        self.success = spec.success_matrix.tolist()
        self.cum = [np.cumsum(row).tolist() for row in spec.interference.matrix]
        self.stationary_cum = np.cumsum(spec.interference.stationary).tolist()

    @staticmethod
    def _pick(cum: list[float], u: float) -> int:
        for j, c in enumerate(cum):
            if u < c:
                return j
        return len(cum) - 1

    def advance(self, i: int, u) -> int:
        if self.n == 1:
            return i
        return self._pick(self.cum[i], u())

    def initial(self, pinned: int | None, u) -> int:
        if pinned is not None:
            return pinned
        if self.n == 1:
            return 0
        return self._pick(self.stationary_cum, u())


def run_trajectory(
    spec: SystemSpec,
    policy: Policy,
    seed: int,
    replication: int = 0,
    *,
    max_slots: int | None = None,
    initial_interference: int | None = None,
    log: list | None = None,
) -> TrajectoryRecord:
    """Simulate one buffer drain from ``(B, D, i0)``.

    ``initial_interference`` is a 0-based index; ``None`` draws it from the
    stationary distribution. When ``log`` is a list, one tuple per slot is
    appended (columns :data:`LOG_COLUMNS`, interference 1-based).
    """
    chan = _Channel(spec)
    g_success, g_chan, g_policy, g_arrival = (_Uniforms(g) for g in streams(seed, replication))
    if max_slots is None:
        max_slots = default_max_slots(spec)
    D, cd, arrival_prob = spec.D, spec.costs.drop_cost, spec.arrival_prob
    power_costs = spec.power_costs.tolist()
    power_levels = list(spec.powers.levels)
    backlog_costs = [spec.costs.backlog(b) for b in range(spec.B + 1)]
    levels, S, sub = chan.levels, chan.success, chan.sub
    needs_u = policy.uses_randomness
    policy.reset()

    b, d = spec.B, D
    i = chan.initial(initial_interference, g_chan)
    total_cost = total_power = 0.0
    slots = departed = dropped = 0
    while b > 0 and slots < max_slots:
        u = g_policy() if needs_u else None
        k = policy.choose(b, d, i, u)
        j = i
        worst = i
        for _ in range(sub - 1):
            j = chan.advance(j, g_chan)
            if levels[j] > levels[worst]:
                worst = j
        ok = g_success() < S[k][worst]
        while b >= len(backlog_costs):
            backlog_costs.append(spec.costs.backlog(len(backlog_costs)))
        cost = power_costs[k] + backlog_costs[b]
        b_obs, d_obs = b, d
        if ok:
            b -= 1
            d = D
            departed += 1
        elif d == 1:
            cost += cd
            b -= 1
            d = D
            departed += 1
            dropped += 1
        else:
            d -= 1
        arrived = arrival_prob > 0 and g_arrival() < arrival_prob
        if arrived:
            b += 1
        if log is not None:
            log.append((slots, b_obs, d_obs, i + 1, power_levels[k], int(ok), int(arrived), cost))
        i = chan.advance(j, g_chan)
        slots += 1
        total_cost += cost
        total_power += power_levels[k]
    return TrajectoryRecord(total_cost, slots, departed, dropped, total_power, truncated=b > 0)


@dataclass(frozen=True)
class SimReport:
    replications: int
    mean_total_cost: float
    stderr_total_cost: float
    drop_fraction: float
    drop_fraction_stderr: float
    mean_drop_fraction: float
    avg_power_per_packet: float
    avg_power_stderr: float
    mean_completion_slots: float
    stderr_completion_slots: float
    truncated_count: int


def _ratio_stderr(num: np.ndarray, den: np.ndarray) -> float:
    """Delta-method standard error of ``sum(num) / sum(den)``."""
    n = len(num)
    if n < 2 or den.sum() == 0:
        return 0.0
    r = num.sum() / den.sum()
    resid = num - r * den
    return float(math.sqrt((resid @ resid) / (n * (n - 1))) / den.mean())


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    if len(x) == 0:
        return math.nan, math.nan
    if len(x) == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def aggregate(records: list[TrajectoryRecord]) -> SimReport:
    cost = np.array([r.total_cost for r in records])
    departed = np.array([r.packets_departed for r in records], dtype=float)
    dropped = np.array([r.packets_dropped for r in records], dtype=float)
    power = np.array([r.total_power for r in records])
    done = np.array([r.slots for r in records if not r.truncated], dtype=float)
    mean_cost, se_cost = _mean_stderr(cost)
    mean_slots, se_slots = _mean_stderr(done)
    total_departed = departed.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        per_rep = np.where(departed > 0, dropped / np.maximum(departed, 1), 0.0)
    return SimReport(
        replications=len(records),
        mean_total_cost=mean_cost,
        stderr_total_cost=se_cost,
        drop_fraction=float(dropped.sum() / total_departed) if total_departed else 0.0,
        drop_fraction_stderr=_ratio_stderr(dropped, departed),
        mean_drop_fraction=float(per_rep.mean()),
        avg_power_per_packet=float(power.sum() / total_departed) if total_departed else 0.0,
        avg_power_stderr=_ratio_stderr(power, departed),
        mean_completion_slots=mean_slots,
        stderr_completion_slots=se_slots,
        truncated_count=int(sum(r.truncated for r in records)),
    )


BLOCK = 1000


class _BlockUniforms:
    """Uniforms of one stream for a block of replications, grown ``CHUNK``
    columns at a time; column ``k`` is the stream's ``k``-th draw."""

    def __init__(self, gens: list[np.random.Generator]):
        self.gens = gens
        self.cols = np.empty((len(gens), 0))

    def column(self, k: int, rows: np.ndarray) -> np.ndarray:
        while k >= self.cols.shape[1]:
            more = np.stack([g.random(CHUNK) for g in self.gens])
            self.cols = np.concatenate([self.cols, more], axis=1)
        return self.cols[rows, k]


def _pick_many(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vector form of :meth:`_Channel._pick` for rows of cumulative sums."""
    return np.minimum((u[:, None] >= cum).sum(axis=1), cum.shape[1] - 1)


def run_block(
    spec: SystemSpec,
    policy: Policy,
    seed: int,
    start: int,
    stop: int,
    *,
    max_slots: int | None = None,
    initial_interference: int | None = None,
) -> list[TrajectoryRecord]:
    """Replications ``start..stop-1`` in lockstep; same records as :func:`run_trajectory`."""
    n = stop - start
    gens = [streams(seed, r) for r in range(start, stop)]
    g_success, g_chan, g_policy, g_arrival = (_BlockUniforms([g[k] for g in gens]) for k in range(4))
    if max_slots is None:
        max_slots = default_max_slots(spec)
    D, cd, arrival_prob = spec.D, spec.costs.drop_cost, spec.arrival_prob
    power_costs = spec.power_costs
    power_levels = spec.powers.array
    S = spec.success_matrix
    levels = np.asarray(spec.interference.levels)
    n_states, sub = spec.n_states, spec.interference.subslots_per_slot
    cum = np.cumsum(spec.interference.matrix, axis=1)
    backlog_costs = np.array([spec.costs.backlog(b) for b in range(spec.B + 1)])
    needs_u = policy.uses_randomness
    policy.reset_many(n)

    b = np.full(n, spec.B, dtype=np.int64)
    d = np.full(n, D, dtype=np.int64)
    all_rows = np.arange(n)
    chan_col = 0
    if initial_interference is not None:
        i = np.full(n, initial_interference, dtype=np.int64)
    elif n_states == 1:
        i = np.zeros(n, dtype=np.int64)
    else:
        stat = np.cumsum(spec.interference.stationary)[None, :]
        i = _pick_many(stat, g_chan.column(0, all_rows))
        chan_col = 1
    total_cost = np.zeros(n)
    total_power = np.zeros(n)
    slots = np.zeros(n, dtype=np.int64)
    departed = np.zeros(n, dtype=np.int64)
    dropped = np.zeros(n, dtype=np.int64)

    rows = all_rows[b > 0]
    t = 0
    while len(rows) and t < max_slots:
        bb, dd, ii = b[rows], d[rows], i[rows]
        u = g_policy.column(t, rows) if needs_u else None
        k = policy.choose_many(bb, dd, ii, u, rows)
        j = worst = ii
        for _ in range(sub - 1):
            if n_states > 1:
                j = _pick_many(cum[j], g_chan.column(chan_col, rows))
                chan_col += 1
            worst = np.where(levels[j] > levels[worst], j, worst)
        ok = g_success.column(t, rows) < S[k, worst]
        top = int(bb.max())
        if top >= len(backlog_costs):
            extra = [spec.costs.backlog(x) for x in range(len(backlog_costs), 2 * top + 1)]
            backlog_costs = np.concatenate([backlog_costs, extra])
        cost = power_costs[k] + backlog_costs[bb]
        expired = ~ok & (dd == 1)
        cost = np.where(expired, cost + cd, cost)
        leave = ok | expired
        bb = bb - leave
        dd = np.where(leave, D, dd - 1)
        departed[rows] += leave
        dropped[rows] += expired
        if arrival_prob > 0:
            bb = bb + (g_arrival.column(t, rows) < arrival_prob)
        if n_states > 1:
            j = _pick_many(cum[j], g_chan.column(chan_col, rows))
            chan_col += 1
        b[rows], d[rows], i[rows] = bb, dd, j
        total_cost[rows] += cost
        total_power[rows] += power_levels[k]
        t += 1
        slots[rows] = t
        rows = rows[bb > 0]
    return [
        TrajectoryRecord(
            float(total_cost[r]),
            int(slots[r]),
            int(departed[r]),
            int(dropped[r]),
            float(total_power[r]),
            truncated=bool(b[r] > 0),
        )
        for r in range(n)
    ]


def _run_range(spec, config, table, base_seed, start, stop, max_slots, initial_interference):
    policy = config.build(spec, table) if isinstance(config, PolicyConfig) else config
    if type(policy).choose_many is Policy.choose_many:
        # controllers without a vector form run one trajectory at a time
        return [
            run_trajectory(
                spec, policy, base_seed, r, max_slots=max_slots, initial_interference=initial_interference
            )
            for r in range(start, stop)
        ]
    out = []
    for lo in range(start, stop, BLOCK):
        out += run_block(
            spec,
            policy,
            base_seed,
            lo,
            min(lo + BLOCK, stop),
            max_slots=max_slots,
            initial_interference=initial_interference,
        )
    return out


def run_records(
    spec: SystemSpec,
    policy: PolicyConfig | Policy,
    replications: int,
    base_seed: int,
    *,
    max_slots: int | None = None,
    initial_interference: int | None = None,
    table: PolicyTable | None = None,
    jobs: int = 1,
) -> list[TrajectoryRecord]:
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if isinstance(policy, PolicyConfig) and policy.kind == "table" and table is None:
        table = policy.build(spec).table
    args = (max_slots, initial_interference)
    if jobs <= 1 or replications < 2 * jobs:
        return _run_range(spec, policy, table, base_seed, 0, replications, *args)
    bounds = np.linspace(0, replications, jobs + 1).astype(int)
    with ProcessPoolExecutor(jobs) as pool:
        futures = [
            pool.submit(_run_range, spec, policy, table, base_seed, lo, hi, *args)
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]
        # collected in replication order so the reduction does not depend on scheduling
        return [rec for fut in futures for rec in fut.result()]


def run_batch(
    spec: SystemSpec,
    policy: PolicyConfig | Policy,
    replications: int,
    base_seed: int,
    **kwargs,
) -> SimReport:
    return aggregate(run_records(spec, policy, replications, base_seed, **kwargs))


def validate_against_dp(
    spec: SystemSpec,
    values: ValueTable,
    table: PolicyTable,
    replications: int,
    seed: int,
    initial_interference: int | None = None,
) -> float:
    """z-score of the simulated DP cost against the exact expected cost-to-go."""
    if spec.arrival_prob > 0 or spec.interference.subslots_per_slot != 1:
        raise ValueError("DP validation needs no arrivals and one sub-slot per slot")
    report = run_batch(
        spec,
        TablePolicy(spec, table),
        replications,
        seed,
        initial_interference=initial_interference,
    )
    start = values.values[spec.B, spec.D - 1]
    if initial_interference is None:
        expected = float(spec.interference.stationary @ start)
    else:
        expected = float(start[initial_interference])
    diff = report.mean_total_cost - expected
    if report.stderr_total_cost == 0:
        return 0.0 if abs(diff) <= 1e-9 * max(1.0, abs(expected)) else math.copysign(math.inf, diff)
    return diff / report.stderr_total_cost


__all__ = [
    "LOG_COLUMNS",
    "SimReport",
    "TrajectoryRecord",
    "aggregate",
    "default_max_slots",
    "run_batch",
    "run_block",
    "run_records",
    "run_trajectory",
    "streams",
    "validate_against_dp",
]
