"""Command-line front end: ``holpower {solve,simulate,verify,sigma,envelope,list}``."""
from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analytics as an
from . import verify as vf
from .dp import solve
from .scenario import ConfigError, Scenario, canned_names, load_canned, load_scenario
from .simulator import LOG_COLUMNS, aggregate, run_records, run_trajectory

SIM_COLUMNS = (
    "scenario",
    "policy",
    "swept_value",
    "mean_total_cost",
    "stderr",
    "drop_fraction",
    "avg_power_per_packet",
    "mean_completion_slots",
    "truncated_count",
)
VERBOSE_COLUMNS = (
    "drop_fraction_stderr",
    "mean_drop_fraction",
    "avg_power_stderr",
    "stderr_completion_slots",
)


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def write_csv(path, header, rows) -> None:
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


def resolve_scenario(args) -> Scenario:
    if args.canned and args.scenario:
        raise ConfigError("", "pass either --scenario or --canned, not both")
    if args.canned:
        sc = load_canned(args.canned)
    elif args.scenario:
        sc = load_scenario(args.scenario)
    else:
        raise ConfigError("", "a scenario is required (--scenario PATH or --canned NAME)")
    sim = sc.sim
    seed = os.environ.get("HOLPOWER_SEED")
    if seed is not None:
        sim = replace(sim, base_seed=int(seed))
    if getattr(args, "seed", None) is not None:
        sim = replace(sim, base_seed=args.seed)
    if getattr(args, "replications", None) is not None:
        sim = replace(sim, replications=args.replications)
    return replace(sc, sim=sim)


def _label(value) -> str:
    return "" if value is None else f"_{value:g}"


def cmd_solve(args) -> int:
    sc = resolve_scenario(args)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    i0 = sc.sim.initial_interference
    for value, spec, _ in sc.points():
        v, table = solve(spec)
        suffix = _label(value)
        write_csv(out / f"values{suffix}.csv", ("b", "d", "i", "value"), v.rows())
        write_csv(out / f"policy{suffix}.csv", ("b", "d", "i", "power"), table.rows())
        start = v.values[spec.B, spec.D - 1]
        if i0 is None:
            summary = f"stationary-start J(B,D) = {float(spec.interference.stationary @ start):.12g}"
        else:
            summary = f"J({spec.B},{spec.D},{i0 + 1}) = {start[i0]:.12g}"
        tag = "" if value is None else f" [{sc.sweep.parameter}={value:g}]"
        print(f"{sc.name}{tag}: {summary}")
    return 0


def cmd_simulate(args) -> int:
    sc = resolve_scenario(args)
    header = SIM_COLUMNS + (VERBOSE_COLUMNS if args.verbose else ())
    rows = []
    trace = None
    for value, spec, policies in sc.points():
        for config in policies:
            records = run_records(
                spec,
                config,
                sc.sim.replications,
                sc.sim.base_seed,
                max_slots=sc.sim.max_slots,
                initial_interference=sc.sim.initial_interference,
                jobs=args.jobs,
            )
            r = aggregate(records)
            row = [
                sc.name,
                config.label,
                value,
                r.mean_total_cost,
                r.stderr_total_cost,
                r.drop_fraction,
                r.avg_power_per_packet,
                r.mean_completion_slots,
                r.truncated_count,
            ]
            if args.verbose:
                row += [
                    r.drop_fraction_stderr,
                    r.mean_drop_fraction,
                    r.avg_power_stderr,
                    r.stderr_completion_slots,
                ]
            rows.append(row)
            if args.trace and trace is None:
                trace = []
                run_trajectory(
                    spec,
                    config.build(spec),
                    sc.sim.base_seed,
                    0,
                    max_slots=sc.sim.max_slots,
                    initial_interference=sc.sim.initial_interference,
                    log=trace,
                )
    write_csv(args.out, header, rows)
    if trace is not None:
        write_csv(args.trace, LOG_COLUMNS, trace)
    return 0


def cmd_verify(args) -> int:
    if args.all_canned:
        scenarios = [load_canned(n) for n in canned_names()]
    else:
        scenarios = [resolve_scenario(args)]
    checks = vf.randomized_checks()
    for sc in scenarios:
        if args.replications is not None:
            sc = replace(sc, sim=replace(sc.sim, replications=args.replications))
        checks += vf.scenario_checks(sc)
    failed = 0
    for c in checks:
        if args.verbose or not c.passed:
            print(c.line())
        failed += not c.passed
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def _fixed_level(spec, index: int | None) -> float:
    if index is None:
        if spec.n_states != 1:
            raise ConfigError("--level", "scenario has several interference states; choose one")
        return spec.interference.levels[0]
    if not 1 <= index <= spec.n_states:
        raise ConfigError("--level", f"must lie in 1..{spec.n_states}")
    return spec.interference.levels[index - 1]


def cmd_sigma(args) -> int:
    sc = resolve_scenario(args)
    spec = sc.points()[0][1]
    st = an.build_sigma(spec, _fixed_level(spec, args.level))
    bounds = an.sigma_bounds(st, spec)
    rows = (
        (b, d, st.delta[b, d - 1], st.sigma[b, d], st.tb0[b], bounds.lower[b, d], bounds.upper[b, d])
        for b in range(1, st.B + 1)
        for d in range(1, st.D + 1)
    )
    write_csv(args.out, ("b", "d", "delta", "sigma", "tb0", "lower", "upper"), rows)
    return 0


def cmd_envelope(args) -> int:
    sc = resolve_scenario(args)
    spec = sc.spec
    level = _fixed_level(spec, args.level)
    env = an.concave_envelope(spec.success, level)
    p = np.linspace(0.0, 4.0 * env.p_star, args.points)
    write_csv(args.out, ("p", "success", "envelope"), zip(p, spec.success(p, level), env(p)))
    print(f"p_star={env.p_star:.12g} k_ccv={env.k_ccv:.12g}", file=sys.stderr)
    return 0


def cmd_list(args) -> int:
    for name in canned_names():
        print(f"{name}: {load_canned(name).description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holpower", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sim=False):
        p.add_argument("--scenario", help="path to a scenario JSON file")
        p.add_argument("--canned", help="name of a built-in scenario (see `list`)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--verbose", action="store_true")
        if sim:
            p.add_argument("--seed", type=int, help="base seed (overrides HOLPOWER_SEED and the file)")
            p.add_argument("--replications", type=int)
            p.add_argument("--jobs", type=int, default=1, help="worker processes")
        return p

    common(sub.add_parser("solve", help="solve the DP and write value/policy CSVs")).set_defaults(
        func=cmd_solve
    )
    p = common(sub.add_parser("simulate", help="Monte Carlo evaluation, one CSV row per point"), sim=True)
    p.add_argument("--trace", help="write the per-slot event log of replication 0 here")
    p.set_defaults(func=cmd_simulate)
    p = common(sub.add_parser("verify", help="run the structural and statistical checks"), sim=True)
    p.add_argument("--all-canned", action="store_true")
    p.set_defaults(func=cmd_verify)
    for name, func in (("sigma", cmd_sigma), ("envelope", cmd_envelope)):
        p = common(sub.add_parser(name, help=f"dump the {name} table"))
        p.add_argument("--level", type=int, help="1-based interference state to fix")
        if name == "envelope":
            p.add_argument("--points", type=int, default=200)
        p.set_defaults(func=func)
    p = sub.add_parser("list", help="list the canned scenarios")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
