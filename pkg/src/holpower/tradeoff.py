"""Drop-versus-power trade-off curves and matched-power comparisons.

Heuristics are compared at equal average power per packet.  A comparator's
tuning parameter (``K`` for the SLBPC family, ``alpha`` for AVG) is bisected
until two simulated operating points bracket the target power tightly, and the
metrics are then interpolated linearly inside that bracket.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

from .model import LinearCost, SystemSpec
from .policies import PolicyConfig
from .simulator import run_batch


@dataclass(frozen=True)
class OperatingPoint:
    kind: str
    parameter: float
    power: float
    drop: float
    drop_se: float
    slots: float
    slots_se: float


def with_power_slope(spec: SystemSpec, k: float) -> SystemSpec:
    return replace(spec, costs=replace(spec.costs, power_cost=LinearCost(k)))


def operating_point(
    spec: SystemSpec,
    kind: str,
    parameter: float,
    replications: int,
    seed: int,
    jobs: int = 1,
) -> OperatingPoint:
    """Simulate ``kind`` at ``parameter`` (``K`` for slbpc*, ``alpha`` for avg)."""
    if kind == "avg":
        config = PolicyConfig("avg", alpha=parameter)
    else:
        spec = with_power_slope(spec, parameter)
        config = PolicyConfig(kind)
    r = run_batch(spec, config, replications, seed, jobs=jobs)
    return OperatingPoint(
        kind,
        parameter,
        r.avg_power_per_packet,
        r.drop_fraction,
        r.drop_fraction_stderr,
        r.mean_completion_slots,
        r.stderr_completion_slots,
    )


def interpolate(a: OperatingPoint, b: OperatingPoint, power: float) -> OperatingPoint:
    """Linear interpolation in power; standard errors take the larger endpoint."""
    t = 0.0 if b.power == a.power else (power - a.power) / (b.power - a.power)
    t = min(max(t, 0.0), 1.0)
    lerp = lambda x, y: x + t * (y - x)  # noqa: E731
    return OperatingPoint(
        a.kind,
        lerp(a.parameter, b.parameter),
        power,
        lerp(a.drop, b.drop),
        max(a.drop_se, b.drop_se),
        lerp(a.slots, b.slots),
        max(a.slots_se, b.slots_se),
    )


def match_power(
    evaluate: Callable[[float], OperatingPoint],
    target: float,
    lo: OperatingPoint,
    hi: OperatingPoint,
    *,
    rel_tol: float = 0.015,
    max_evals: int = 10,
    geometric: bool = False,
) -> tuple[OperatingPoint, OperatingPoint, OperatingPoint]:
    """Shrink a bracket around ``target`` power, then interpolate.

    ``lo`` and ``hi`` are operating points whose powers straddle ``target``;
    either may have the larger parameter.  Returns the interpolated point and
    the final bracket.  Power can be a step function of the parameter (the
    SLBPC levels are discrete), so the loop also stops after ``max_evals``.
    """
    if not min(lo.power, hi.power) <= target <= max(lo.power, hi.power):
        raise ValueError(f"target power {target:g} is not bracketed by {lo.power:g}, {hi.power:g}")
    evals = 0
    while abs(hi.power - lo.power) > rel_tol * target and evals < max_evals:
        if geometric:
            mid = math.sqrt(lo.parameter * hi.parameter)
        else:
            mid = 0.5 * (lo.parameter + hi.parameter)
        m = evaluate(mid)
        evals += 1
        if (m.power - target) * (lo.power - target) > 0:
            lo = m
        else:
            hi = m
    return interpolate(lo, hi, target), lo, hi


def bracket(curve: list[OperatingPoint], target: float) -> tuple[OperatingPoint, OperatingPoint]:
    """Adjacent points of ``curve`` (sorted by parameter) straddling ``target``."""
    for a, b in zip(curve, curve[1:]):
        if min(a.power, b.power) <= target <= max(a.power, b.power):
            return a, b
    raise ValueError(f"no operating points straddle power {target:g}")


@dataclass(frozen=True)
class Match:
    """A comparator interpolated to a target power, with the parameters that
    bracketed it: ``tight`` after bisection and ``coarse`` from the grid."""

    point: OperatingPoint
    tight: tuple[float, float]
    coarse: tuple[float, float]


@dataclass(frozen=True)
class MatchedComparison:
    reference: OperatingPoint
    slbpc1: Match
    avg: Match
    replications: int

    @staticmethod
    def gap(better: OperatingPoint, worse: OperatingPoint) -> tuple[float, float]:
        """Drop-fraction separation and its pooled standard error."""
        return worse.drop - better.drop, math.hypot(better.drop_se, worse.drop_se)

    def separations(self) -> dict[str, tuple[float, float]]:
        return {
            "slbpc2<slbpc1": self.gap(self.reference, self.slbpc1.point),
            "slbpc1<avg": self.gap(self.slbpc1.point, self.avg.point),
        }

    def resolved(self, z: float = 2.0) -> bool:
        """Every separation is either beyond ``z`` pooled errors or reversed."""
        return all(abs(g) > z * se for g, se in self.separations().values())


def _evaluator(spec, kind, replications, seed, jobs, progress):
    def f(x):
        p = operating_point(spec, kind, x, replications, seed, jobs)
        if progress:
            progress(f"{kind} {x:.6g} [{replications}]: power={p.power:.5f} drop={p.drop:.5f}+-{p.drop_se:.5f}")
        return p

    return f


def _match(ev, target, lo, hi, coarse, geometric) -> Match:
    point, a, b = match_power(ev, target, lo, hi, geometric=geometric)
    return Match(point, (a.parameter, b.parameter), coarse)


def low_power_comparison(
    spec: SystemSpec,
    k_grid: list[float],
    alpha_grid: list[float],
    replications: int,
    seed: int,
    *,
    n_points: int = 2,
    jobs: int = 1,
    progress: Callable[[str], None] | None = None,
) -> list[MatchedComparison]:
    """Compare SLBPC1 and AVG against SLBPC2 at its lowest-power grid points."""
    ev2, ev1, eva = (_evaluator(spec, k, replications, seed, jobs, progress) for k in ("slbpc2", "slbpc1", "avg"))
    ks = sorted(k_grid)
    curve2 = [ev2(k) for k in ks]
    curve1 = [ev1(k) for k in ks]
    curve_a = [eva(a) for a in sorted(alpha_grid)]
    targets = sorted(curve2, key=lambda p: p.power)[:n_points]
    out = []
    for ref in targets:
        lo1, hi1 = bracket(curve1, ref.power)
        loa, hia = bracket(curve_a, ref.power)
        m1 = _match(ev1, ref.power, lo1, hi1, (lo1.parameter, hi1.parameter), True)
        ma = _match(eva, ref.power, loa, hia, (loa.parameter, hia.parameter), False)
        out.append(MatchedComparison(ref, m1, ma, replications))
    return out


def escalate(
    spec: SystemSpec,
    comparison: MatchedComparison,
    replications: int,
    seed: int,
    *,
    jobs: int = 1,
    progress: Callable[[str], None] | None = None,
) -> MatchedComparison:
    """Repeat one matched comparison with more replications.

    The reference point is re-simulated; each comparator restarts from its
    tight bracket, falling back to the coarse grid bracket when the new
    target power no longer lies inside it.
    """
    ev2, ev1, eva = (_evaluator(spec, k, replications, seed, jobs, progress) for k in ("slbpc2", "slbpc1", "avg"))
    ref = ev2(comparison.reference.parameter)

    def redo(ev, m: Match, geometric: bool) -> Match:
        lo, hi = ev(m.tight[0]), ev(m.tight[1])
        if not min(lo.power, hi.power) <= ref.power <= max(lo.power, hi.power):
            lo, hi = ev(m.coarse[0]), ev(m.coarse[1])
        return _match(ev, ref.power, lo, hi, m.coarse, geometric)

    return MatchedComparison(ref, redo(ev1, comparison.slbpc1, True), redo(eva, comparison.avg, False), replications)
