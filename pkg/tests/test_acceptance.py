"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from holpower import analytics as an
from holpower import cli
from holpower.dp import bellman_residual, solve
from holpower.model import SuccessFunction
from holpower.oracles import brute_force_values, random_instance
from holpower.policies import PolicyConfig
from holpower.scenario import canned_names, load_canned
from holpower.simulator import run_batch, validate_against_dp
from holpower.tradeoff import escalate, low_power_comparison
from holpower.verify import envelope_checks, monotonicity_violations

SEED = 20150101


def illustrative(cd):
    return load_canned(f"illustrative-cd{cd}").spec


def test_c1_bellman_exactness(record):
    worst, slowest = 0.0, 0.0
    for name in canned_names():
        sc = load_canned(name)
        t = time.perf_counter()
        for _, spec, _ in sc.points():
            if spec.arrival_prob > 0:
                continue
            v, _ = solve(spec)
            worst = max(worst, bellman_residual(spec, v))
        slowest = max(slowest, time.perf_counter() - t)
    ok = worst <= 1e-9 and slowest < 1.0
    assert record(1, ok, f"max residual {worst:.3g} (<= 1e-9), slowest scenario {slowest:.3f}s (< 1 s)")


def test_c2_brute_force(record):
    rng = np.random.default_rng(SEED)
    worst, n = 0.0, 0
    for _ in range(60):
        spec = random_instance(rng, max_product=8, max_powers=3)
        assert spec.B * spec.D * spec.n_states <= 8 and len(spec.powers) <= 3
        v, _ = solve(spec)
        for (b, d, i), val in brute_force_values(spec).items():
            worst = max(worst, abs(v(b, d, i) - val))
        n += 1
    assert record(2, worst <= 1e-9, f"{n} instances, max |DP - enumeration| {worst:.3g} (<= 1e-9)")


def test_c3_increment_identity(record):
    worst, mismatches = 0.0, 0
    for cd in (1, 10, 100):
        spec = illustrative(cd)
        v, table = solve(spec)
        st = an.build_sigma(spec)
        worst = max(worst, an.check_prop1(spec, v, st))
        mismatches += int((an.semi_analytic_policy(st, spec).index[1:] != table.index[1:]).sum())
    ok = worst <= 1e-9 and mismatches == 0
    assert record(3, ok, f"identity error {worst:.3g} (<= 1e-9), policy mismatches {mismatches}")


def test_c4_deadline_structure(record):
    bad = 0
    for cd, rule in ((1, lambda b: +1), (100, lambda b: -1), (10, lambda b: -1 if b <= 4 else +1)):
        spec = illustrative(cd)
        _, table = solve(spec)
        mu = table.power_array[1:, :, 0]
        for b in range(1, 21):
            bad += int((rule(b) * np.diff(mu[b - 1]) < 0).sum())
        bad += monotonicity_violations(table, an.build_sigma(spec).tb0)
    assert record(4, bad == 0, f"{bad} violations (== 0)")


def test_c5_sigma_bounds(record):
    slack = min(an.sigma_bounds(an.build_sigma(illustrative(cd)), illustrative(cd)).slack(
        an.build_sigma(illustrative(cd))) for cd in (1, 10, 100))
    rng = np.random.default_rng(SEED + 5)
    for _ in range(100):
        spec = random_instance(rng, max_product=60, max_powers=4, n_states=1)
        st = an.build_sigma(spec)
        slack = min(slack, an.sigma_bounds(st, spec).slack(st))
    assert record(5, slack >= -1e-9, f"min slack {slack:.3g} (>= -1e-9)")


def test_c6_concave_envelope(record):
    settings = [(1.0, math.log(2.0), 2.0), (0.5, 0.0, 4.0), (2.0, 1.0, 6.0)]
    checks = []
    for b0, b1, b2 in settings:
        s = SuccessFunction("sigmoidal", beta0=b0, beta1=b1, beta2=b2)
        checks += envelope_checks(s, 2.0, f"beta=({b0:g},{b1:.3g},{b2:g})")
    failed = [c.line() for c in checks if not c.passed]
    worst = max(c.measured for c in checks if "tangency" in c.name)
    assert record(6, not failed, "; ".join([f"{len(checks)} checks, worst tangency residual {worst:.3g}"] + failed))


def test_c7_dp_simulation_consistency(record):
    t = time.perf_counter()
    zs = []
    for name in ("slow-fading", "fast-fading"):
        sc = load_canned(name)
        pts = sc.points()
        for n in (0, len(pts) // 2, len(pts) - 1):
            _, spec, _ = pts[n]
            v, table = solve(spec)
            zs.append(validate_against_dp(spec, v, table, 2000, sc.sim.base_seed, sc.sim.initial_interference))
    elapsed = time.perf_counter() - t
    worst = max(abs(z) for z in zs)
    ok = worst <= 3.0 and elapsed < 30.0
    assert record(7, ok, f"max |z| {worst:.2f} over {len(zs)} points (<= 3), {elapsed:.1f}s (< 30 s)")


def _cost(spec, kind, sc):
    r = run_batch(spec, PolicyConfig(kind), 2000, sc.sim.base_seed, initial_interference=sc.sim.initial_interference)
    return r.mean_total_cost, r.stderr_total_cost


def test_c8_regime_behaviour(record):
    problems = []
    for name in ("slow-fading", "fast-fading"):
        sc = load_canned(name)
        pts = sc.points()
        for n, (k, spec, _) in enumerate(pts):
            dp = _cost(spec, "table", sc)
            for kind in ("min", "max", "slbpc1", "slbpc2"):
                other = _cost(spec, kind, sc)
                se = math.hypot(dp[1], other[1])
                if dp[0] > other[0] + 2 * se:
                    problems.append(f"{name} K={k:g}: DP {dp[0]:.4g} > {kind} {other[0]:.4g} + 2se")
                if (n == 0 and kind == "max") or (n == len(pts) - 1 and kind == "min"):
                    if abs(dp[0] - other[0]) > 2 * se:
                        problems.append(f"{name} K={k:g}: DP {dp[0]:.4g} vs {kind} {other[0]:.4g} beyond 2se")
    assert record(8, not problems, "; ".join(problems) or "regimes and DP dominance hold, both scenarios")


@pytest.mark.slow
def test_c9_low_power_ordering(record):
    sc, av = load_canned("detailed-slbpc"), load_canned("detailed-avg")
    spec, seed = sc.spec, sc.sim.base_seed
    comparisons = low_power_comparison(spec, list(sc.sweep.values), list(av.sweep.values), 10_000, seed)
    final = [c if c.resolved() else escalate(spec, c, 100_000, seed) for c in comparisons]
    parts, ok = [], True
    for c in final:
        seps = c.separations()
        good = all(g > 2 * se for g, se in seps.values())
        slots = c.slbpc1.point.slots <= c.reference.slots
        ok &= good and slots
        z = ", ".join(f"{k} z={g / se:.2f}" for k, (g, se) in seps.items())
        parts.append(
            f"power {c.reference.power:.3f} [{c.replications}]: {z}; "
            f"slots slbpc1 {c.slbpc1.point.slots:.1f} vs slbpc2 {c.reference.slots:.1f}"
        )
    assert record(9, ok, " | ".join(parts))


def _run_twice(argv, tmp_path, capsys):
    outs = []
    for n in range(2):
        target = tmp_path / f"run{n}"
        target.mkdir()
        if argv[0] == "solve":
            assert cli.main(argv + ["--out", str(target)]) == 0
            outs.append(b"".join(f.name.encode() + f.read_bytes() for f in sorted(target.iterdir())))
        else:
            code = cli.main(argv + ["--out", str(target / "out.csv")] if argv[0] != "list" else argv)
            assert code == 0
            out = capsys.readouterr().out.encode()
            path = target / "out.csv"
            outs.append(path.read_bytes() if path.exists() else out)
    capsys.readouterr()
    return outs[0] == outs[1] and len(outs[0]) > 0


def test_c10_determinism(record, tmp_path_factory, capsys):
    commands = [
        ["list"],
        ["solve", "--canned", "illustrative-cd10"],
        ["solve", "--canned", "slow-fading"],
        ["simulate", "--canned", "slow-fading", "--replications", "200"],
        ["simulate", "--canned", "detailed-slbpc", "--replications", "100", "--jobs", "2"],
        ["sigma", "--canned", "illustrative-cd100"],
        ["envelope", "--canned", "sigmoid-illustrative", "--points", "100"],
        ["verify", "--canned", "illustrative-cd1", "--replications", "200"],
    ]
    differing = [" ".join(a) for a in commands if not _run_twice(a, tmp_path_factory.mktemp("c10"), capsys)]
    assert record(10, not differing, f"{len(commands)} commands; differing: {differing or 'none'}")
