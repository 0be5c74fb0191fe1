import csv
import io
import json

import pytest

from holpower import cli
from holpower.scenario import (
    ConfigError,
    canned_names,
    dump_scenario,
    load_canned,
    load_scenario,
    parse_scenario,
    scenario_to_dict,
)


def small_scenario(**overrides):
    d = {
        "name": "small",
        "spec": {
            "B": 4,
            "D": 3,
            "powers": [0.1, 0.4, 0.8],
            "costs": {"power": {"linear": 0.5}, "backlog": {"linear": 1.0}, "drop": 2.0},
            "success": {"family": "exponential", "scale": 2.0},
            "interference": {"levels": [1.0, 2.0], "transition": [[0.8, 0.2], [0.3, 0.7]]},
        },
        "policy": [{"kind": "table"}, {"kind": "slbpc2"}, {"kind": "avg", "alpha": 0.5}],
        "sim": {"replications": 60, "base_seed": 9},
    }
    d.update(overrides)
    return d


def write(tmp_path, d, name="sc.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# --- parsing


@pytest.mark.parametrize("name", canned_names())
def test_canned_round_trip(name):
    sc = load_canned(name)
    again = parse_scenario(json.loads(dump_scenario(sc)))
    assert again == sc
    assert scenario_to_dict(again) == scenario_to_dict(sc)


def test_round_trip_of_parsed_file(tmp_path):
    sc = load_scenario(write(tmp_path, small_scenario()))
    assert parse_scenario(scenario_to_dict(sc)) == sc
    assert sc.sim.initial_interference is None
    assert sc.policies[2].alpha == 0.5


def test_bad_row_sum_rejected(tmp_path):
    d = small_scenario()
    d["spec"]["interference"]["transition"][1] = [0.5, 0.4]
    with pytest.raises(ConfigError) as e:
        load_scenario(write(tmp_path, d))
    assert e.value.path == "spec.interference"
    assert "sums to" in str(e.value)


def test_zero_backlog_rejected(tmp_path):
    d = small_scenario()
    d["spec"]["B"] = 0
    with pytest.raises(ConfigError):
        load_scenario(write(tmp_path, d))


@pytest.mark.parametrize(
    "mutate,path",
    [
        (lambda d: d["spec"].pop("D"), "spec.D"),
        (lambda d: d["spec"]["costs"].update(power={"cubic": 1}), "spec.costs.power"),
        (lambda d: d["spec"]["success"].update(scale="big"), "spec.success.scale"),
        (lambda d: d["spec"]["powers"].append(0.2), "spec.powers"),
        (lambda d: d["policy"][1].update(colour=1), "policy[1]"),
        (lambda d: d["sim"].update(initial_interference=3), "sim.initial_interference"),
        (lambda d: d.update(sweep={"parameter": "alpha", "values": [0.1]}), "sweep.parameter"),
        (lambda d: d.update(sweep={"parameter": "K", "values": []}), "sweep.values"),
    ],
)
def test_diagnostics_carry_field_path(tmp_path, mutate, path):
    d = small_scenario()
    mutate(d)
    with pytest.raises(ConfigError) as e:
        load_scenario(write(tmp_path, d))
    assert e.value.path == path


def test_sweep_points_sorted_and_applied():
    sc = parse_scenario(small_scenario(sweep={"parameter": "K", "values": [3.0, 0.5, 1.0]}))
    pts = sc.points()
    assert [v for v, _, _ in pts] == [0.5, 1.0, 3.0]
    assert [s.costs.power_slope for _, s, _ in pts] == [0.5, 1.0, 3.0]
    sc = parse_scenario(small_scenario(sweep={"parameter": "Cd", "values": [4.0]}))
    assert sc.points()[0][1].costs.drop_cost == 4.0


def test_unknown_canned_name():
    with pytest.raises(KeyError):
        load_canned("no-such-thing")


# --- commands


def test_list(capsys):
    code, out, _ = run(["list"], capsys)
    assert code == 0
    names = [line.split(":")[0] for line in out.strip().splitlines()]
    assert names == canned_names()


@pytest.mark.parametrize("cd,sign", [(100, -1), (1, +1)])
def test_solve_writes_monotone_policy(tmp_path, capsys, cd, sign):
    code, out, _ = run(["solve", "--canned", f"illustrative-cd{cd}", "--out", str(tmp_path)], capsys)
    assert code == 0 and "J(20,5,1)" in out
    rows = list(csv.DictReader(open(tmp_path / "policy.csv")))
    assert len(rows) == 100
    mu = {(int(r["b"]), int(r["d"])): float(r["power"]) for r in rows}
    for b in range(1, 21):
        steps = [mu[b, d + 1] - mu[b, d] for d in range(1, 5)]
        assert all(sign * s >= 0 for s in steps)
    values = list(csv.DictReader(open(tmp_path / "values.csv")))
    assert values[0] == {"b": "0", "d": "1", "i": "1", "value": "0"}


def test_solve_rejects_arrivals(tmp_path, capsys):
    d = small_scenario()
    d["spec"]["arrival_prob"] = 0.1
    code, _, err = run(["solve", "--scenario", write(tmp_path, d), "--out", str(tmp_path)], capsys)
    assert code == 2 and "arrival" in err


def test_bad_config_exit_code(tmp_path, capsys):
    d = small_scenario()
    d["spec"]["interference"]["transition"][0] = [0.5, 0.4]
    code, _, err = run(["simulate", "--scenario", write(tmp_path, d)], capsys)
    assert code == 2 and "spec.interference" in err


def test_simulate_columns_and_rows(tmp_path, capsys):
    path = write(tmp_path, small_scenario(sweep={"parameter": "K", "values": [2.0, 0.5]}))
    code, out, _ = run(["simulate", "--scenario", path], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert tuple(rows[0]) == cli.SIM_COLUMNS
    assert [(r[1], r[2]) for r in rows[1:]] == [
        ("table", "0.5"),
        ("slbpc2", "0.5"),
        ("avg", "0.5"),
        ("table", "2"),
        ("slbpc2", "2"),
        ("avg", "2"),
    ]
    code, out, _ = run(["simulate", "--scenario", path, "--verbose"], capsys)
    assert tuple(next(csv.reader(io.StringIO(out)))) == cli.SIM_COLUMNS + cli.VERBOSE_COLUMNS


def test_simulate_is_byte_identical(tmp_path, capsys):
    path = write(tmp_path, small_scenario())
    outs = []
    for n, jobs in enumerate(["1", "1", "2"]):
        out = tmp_path / f"r{n}.csv"
        trace = tmp_path / f"t{n}.csv"
        code, _, _ = run(
            ["simulate", "--scenario", path, "--out", str(out), "--trace", str(trace), "--jobs", jobs], capsys
        )
        assert code == 0
        outs.append((out.read_bytes(), trace.read_bytes()))
    assert outs[0] == outs[1] == outs[2]
    assert outs[0][1].startswith(b"slot,b,d,i_observed,power,success,arrival,stage_cost\n")


def test_other_commands_byte_identical(tmp_path, capsys):
    for argv in (
        ["solve", "--canned", "illustrative-cd10"],
        ["sigma", "--canned", "illustrative-cd10"],
        ["envelope", "--canned", "sigmoid-illustrative", "--points", "50"],
    ):
        dumps = []
        for n in range(2):
            out = tmp_path / f"o{n}"
            target = str(out) if argv[0] == "solve" else str(out) + ".csv"
            assert cli.main(argv + ["--out", target]) == 0
            if argv[0] == "solve":
                dumps.append(((out / "values.csv").read_bytes(), (out / "policy.csv").read_bytes()))
            else:
                dumps.append(open(target, "rb").read())
        capsys.readouterr()
        assert dumps[0] == dumps[1]


def test_seed_precedence(tmp_path, capsys, monkeypatch):
    path = write(tmp_path, small_scenario(policy={"kind": "slbpc2"}))

    def sim(*extra):
        code, out, _ = run(["simulate", "--scenario", path, *extra], capsys)
        assert code == 0
        return out

    from_file = sim()
    assert sim("--seed", "9") == from_file
    monkeypatch.setenv("HOLPOWER_SEED", "123")
    from_env = sim()
    assert from_env != from_file
    assert sim("--seed", "9") == from_file
    monkeypatch.delenv("HOLPOWER_SEED")
    assert sim("--seed", "123") == from_env


def test_sigma_dump(capsys):
    code, out, _ = run(["sigma", "--canned", "illustrative-cd10"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 100
    for r in rows:
        assert float(r["lower"]) - 1e-9 <= float(r["sigma"]) <= float(r["upper"]) + 1e-9
    assert float(rows[0]["sigma"]) == pytest.approx(1 - 4.64665, abs=1e-5)


def test_sigma_needs_level_for_two_state_chain(capsys):
    code, _, err = run(["sigma", "--canned", "slow-fading"], capsys)
    assert code == 2 and "--level" in err
    code, out, _ = run(["sigma", "--canned", "slow-fading", "--level", "2"], capsys)
    assert code == 0


def test_envelope_dump(capsys):
    code, out, err = run(["envelope", "--canned", "sigmoid-illustrative", "--points", "20"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 20 and "p_star" in err
    for r in rows:
        assert float(r["envelope"]) >= float(r["success"]) - 1e-12


def test_verify_single_scenario(capsys):
    code, out, _ = run(["verify", "--canned", "illustrative-cd10", "--replications", "300", "--verbose"], capsys)
    assert code == 0
    assert "PASS" in out and "FAIL" not in out


def test_verify_fails_on_bad_config(tmp_path, capsys):
    d = small_scenario()
    d["spec"]["interference"]["transition"][0] = [0.5, 0.4]
    code, _, _ = run(["verify", "--scenario", write(tmp_path, d)], capsys)
    assert code == 2


def test_needs_a_scenario(capsys):
    code, _, err = run(["simulate"], capsys)
    assert code == 2 and "scenario" in err
