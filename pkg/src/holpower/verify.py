"""Structural and statistical self-checks behind ``holpower verify``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import analytics as an
from .dp import PolicyTable, bellman_residual, solve
from .model import SystemSpec
from .oracles import brute_force_values, random_instance
from .scenario import Scenario
from .simulator import validate_against_dp

META_SEED = 20150101
GRID_POINTS = 10_000


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    threshold: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: measured={self.measured:.6g} threshold={self.threshold:.6g}"


def _at_most(name, measured, threshold) -> Check:
    return Check(name, float(measured), float(threshold), bool(measured <= threshold))


def _at_least(name, measured, threshold) -> Check:
    return Check(name, float(measured), float(threshold), bool(measured >= threshold))


def monotonicity_violations(table: PolicyTable, tb0: np.ndarray) -> int:
    """Count breaches of the single-interference policy structure.

    Power must be non-decreasing in ``b`` for every ``d``; non-decreasing in
    ``d`` where ``T_b(0) >= 0`` and non-increasing where ``T_b(0) <= 0``.
    """
    mu = table.power_array[1:, :, 0]
    bad = int((np.diff(mu, axis=0) < 0).sum())
    for b in range(1, mu.shape[0] + 1):
        steps = np.diff(mu[b - 1])
        if tb0[b] >= 0:
            bad += int((steps < 0).sum())
        if tb0[b] <= 0:
            bad += int((steps > 0).sum())
    return bad


def sigma_structure_violations(st: an.SigmaTable, tol: float = 1e-9) -> int:
    sig = st.sigma[1:]
    bad = int((np.diff(sig, axis=0) < -tol).sum())
    for b in range(1, st.B + 1):
        row, steps = st.sigma[b], np.diff(st.sigma[b])
        if st.tb0[b] >= 0:
            bad += int((row < -tol).sum() + (steps < -tol).sum())
        if st.tb0[b] <= 0:
            bad += int((row > tol).sum() + (steps > tol).sum())
    return bad


def sigma_recursion_error(spec: SystemSpec, st: an.SigmaTable) -> float:
    worst = 0.0
    for b in range(1, st.B + 1):
        for d in range(1, st.D + 1):
            tb = an.apply_tb(spec, b, st.sigma[b, d - 1], st.fixed_i)
            worst = max(worst, abs(tb - st.sigma[b, d]))
    return worst


def envelope_checks(s, level: float, label: str) -> list[Check]:
    env = an.concave_envelope(s, level)
    p = np.linspace(0.0, 4.0 * env.p_star, GRID_POINTS)
    majorant_slack = float((env(p) - s(p, level)).min())
    e = env(p)
    concavity = float(np.max(0.5 * (e[:-2] + e[2:]) - e[1:-1]))
    return [
        _at_least(f"{label} envelope majorizes s (min slack)", majorant_slack, -1e-9),
        _at_most(f"{label} envelope midpoint concavity violation", max(concavity, 0.0), 1e-9),
        _at_most(f"{label} tangency residual at p*", env.tangency_residual(), 1e-10),
    ]


def fixed_interference_checks(spec: SystemSpec, label: str) -> list[Check]:
    v, table = solve(spec)
    st = an.build_sigma(spec)
    semi = an.semi_analytic_policy(st, spec)
    bounds = an.sigma_bounds(st, spec)
    return [
        _at_most(f"{label} delta-increment identity", an.check_prop1(spec, v, st), 1e-9),
        _at_most(
            f"{label} semi-analytic policy mismatches",
            int((semi.index[1:] != table.index[1:]).sum()),
            0,
        ),
        _at_most(f"{label} sigma recursion error", sigma_recursion_error(spec, st), 1e-12),
        _at_most(f"{label} sigma monotonicity violations", sigma_structure_violations(st), 0),
        _at_most(f"{label} policy monotonicity violations", monotonicity_violations(table, st.tb0), 0),
        _at_least(f"{label} sigma bound slack", bounds.slack(st), -1e-9),
    ]


def scenario_checks(sc: Scenario, z_points: int = 3) -> list[Check]:
    checks: list[Check] = []
    points = sc.points()
    z_idx = sorted({0, len(points) // 2, len(points) - 1})[:z_points]
    for n, (value, spec, _) in enumerate(points):
        label = sc.name if value is None else f"{sc.name}[{sc.sweep.parameter}={value:g}]"
        if spec.success.family == "sigmoidal" and n == 0:
            for lvl in spec.interference.levels:
                checks += envelope_checks(spec.success, lvl, f"{label} i={lvl:g}")
        if spec.arrival_prob > 0:
            continue
        v, table = solve(spec)
        checks.append(_at_most(f"{label} Bellman residual", bellman_residual(spec, v), 1e-9))
        checks.append(_at_least(f"{label} min cost-to-go", float(v.values.min()), 0.0))
        mono = int((np.diff(v.values, axis=0) < -1e-9).sum())
        checks.append(_at_most(f"{label} cost-to-go decreases in b", mono, 0))
        if spec.n_states == 1:
            checks += fixed_interference_checks(spec, label)
        if n in z_idx and spec.interference.subslots_per_slot == 1:
            z = validate_against_dp(
                spec, v, table, sc.sim.replications, sc.sim.base_seed, sc.sim.initial_interference
            )
            checks.append(_at_most(f"{label} |z| DP vs simulation", abs(z), 3.0))
    return checks


def randomized_checks(meta_seed: int = META_SEED) -> list[Check]:
    rng = np.random.default_rng(meta_seed)
    worst = 0.0
    for _ in range(50):
        spec = random_instance(rng)
        v, _ = solve(spec)
        brute = brute_force_values(spec)
        for (b, d, i), val in brute.items():
            worst = max(worst, abs(v(b, d, i) - val))
    checks = [_at_most("DP vs brute-force enumeration (50 instances)", worst, 1e-9)]
    mono = mismatch = 0
    slack = np.inf
    for _ in range(100):
        spec = random_instance(rng, max_product=60, max_powers=4, n_states=1)
        _, table = solve(spec)
        st = an.build_sigma(spec)
        mono += monotonicity_violations(table, st.tb0)
        mismatch += int((an.semi_analytic_policy(st, spec).index[1:] != table.index[1:]).sum())
        slack = min(slack, an.sigma_bounds(st, spec).slack(st))
    checks.append(_at_most("policy monotonicity violations (100 random instances)", mono, 0))
    checks.append(_at_most("semi-analytic vs DP mismatches (100 random instances)", mismatch, 0))
    checks.append(_at_least("sigma bound slack (100 random instances)", slack, -1e-9))
    return checks
