"""JSON scenario files and the canned experiment catalogue.

Interference indices are 1-based in files and 0-based in memory.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any

from .model import (
    CostModel,
    InterferenceChain,
    LinearCost,
    PowerSet,
    SuccessFunction,
    SystemSpec,
    TableCost,
)
from .policies import PolicyConfig

SWEEP_PARAMETERS = ("K", "alpha", "Cd")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class SimSettings:
    replications: int = 2000
    base_seed: int = 0
    max_slots: int | None = None
    initial_interference: int | None = None  # 0-based; None = stationary


@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: SystemSpec
    policies: tuple[PolicyConfig, ...]
    sim: SimSettings = field(default_factory=SimSettings)
    sweep: Sweep | None = None
    description: str = ""

    def __post_init__(self):
        if not self.policies:
            raise ConfigError("policy", "at least one policy is required")
        if self.sim.initial_interference is not None and not (
            0 <= self.sim.initial_interference < self.spec.n_states
        ):
            raise ConfigError("sim.initial_interference", "index outside the interference chain")
        if self.sweep is not None:
            if self.sweep.parameter not in SWEEP_PARAMETERS:
                raise ConfigError("sweep.parameter", f"must be one of {SWEEP_PARAMETERS}")
            if not self.sweep.values:
                raise ConfigError("sweep.values", "must be non-empty")
            if self.sweep.parameter == "alpha" and any(p.kind != "avg" for p in self.policies):
                raise ConfigError("sweep.parameter", "alpha only applies to avg policies")

    def points(self) -> list[tuple[float | None, SystemSpec, tuple[PolicyConfig, ...]]]:
        """``(swept value, spec, policies)`` per sweep point, sorted by value."""
        if self.sweep is None:
            return [(None, self.spec, self.policies)]
        out = []
        for v in sorted(self.sweep.values):
            spec, pols = self.spec, self.policies
            if self.sweep.parameter == "K":
                spec = replace(spec, costs=replace(spec.costs, power_cost=LinearCost(v)))
            elif self.sweep.parameter == "Cd":
                spec = replace(spec, costs=replace(spec.costs, drop_cost=v))
            else:
                pols = tuple(replace(p, alpha=v) for p in pols)
            out.append((v, spec, pols))
        return out


# ---------------------------------------------------------------- parsing


def _get(d: dict, key: str, path: str, default: Any = ...):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}".lstrip("."), "missing required field")
        return default
    return d[key]


def _number(x, path: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigError(path, f"expected a finite number, got {x!r}")
    return float(x)


def _integer(x, path: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(path, f"expected an integer, got {x!r}")
    return x


def _numbers(xs, path: str) -> tuple[float, ...]:
    if not isinstance(xs, list):
        raise ConfigError(path, "expected an array")
    return tuple(_number(x, f"{path}[{k}]") for k, x in enumerate(xs))


def _wrap(path: str, build, *args, **kwargs):
    try:
        return build(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_cost(d, path: str):
    if not isinstance(d, dict) or len(d) != 1:
        raise ConfigError(path, 'expected {"linear": slope} or {"table": [...]}')
    (kind, value), = d.items()
    if kind == "linear":
        return _wrap(path, LinearCost, _number(value, f"{path}.linear"))
    if kind == "table":
        return _wrap(path, TableCost, _numbers(value, f"{path}.table"))
    raise ConfigError(path, f"unknown cost form {kind!r}")


def _parse_success(d, path: str) -> SuccessFunction:
    family = _get(d, "family", path)
    kwargs = {}
    for key in ("scale", "beta0", "beta1", "beta2", "value"):
        if key in d:
            kwargs[key] = _number(d[key], f"{path}.{key}")
    unknown = set(d) - {"family", *kwargs}
    if unknown:
        raise ConfigError(path, f"unknown fields {sorted(unknown)}")
    return _wrap(path, SuccessFunction, family, **kwargs)


def parse_spec(d: dict, path: str = "spec") -> SystemSpec:
    B = _integer(_get(d, "B", path), f"{path}.B")
    D = _integer(_get(d, "D", path), f"{path}.D")
    powers = _wrap(f"{path}.powers", PowerSet, _numbers(_get(d, "powers", path), f"{path}.powers"))
    c = _get(d, "costs", path)
    costs = _wrap(
        f"{path}.costs",
        CostModel,
        _parse_cost(_get(c, "power", f"{path}.costs"), f"{path}.costs.power"),
        _parse_cost(_get(c, "backlog", f"{path}.costs"), f"{path}.costs.backlog"),
        _number(_get(c, "drop", f"{path}.costs"), f"{path}.costs.drop"),
    )
    success = _parse_success(_get(d, "success", path), f"{path}.success")
    ch = _get(d, "interference", path)
    ipath = f"{path}.interference"
    rows = _get(ch, "transition", ipath)
    if not isinstance(rows, list):
        raise ConfigError(f"{ipath}.transition", "expected an array of rows")
    chain = _wrap(
        ipath,
        InterferenceChain,
        _numbers(_get(ch, "levels", ipath), f"{ipath}.levels"),
        tuple(_numbers(r, f"{ipath}.transition[{k}]") for k, r in enumerate(rows)),
        _integer(_get(ch, "subslots_per_slot", ipath, 1), f"{ipath}.subslots_per_slot"),
    )
    arrival = _number(_get(d, "arrival_prob", path, 0.0), f"{path}.arrival_prob")
    return _wrap(path, SystemSpec, B, D, powers, costs, success, chain, arrival)


def _parse_policy(d, path: str) -> PolicyConfig:
    kind = _get(d, "kind", path)
    kwargs = {}
    for key in ("alpha", "k_slope", "i_ref", "p_change"):
        if d.get(key) is not None:
            kwargs[key] = _number(d[key], f"{path}.{key}")
    unknown = set(d) - {"kind", "alpha", "k_slope", "i_ref", "p_change"}
    if unknown:
        raise ConfigError(path, f"unknown fields {sorted(unknown)}")
    return _wrap(path, PolicyConfig, kind, **kwargs)


def parse_scenario(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ConfigError("", "scenario must be a JSON object")
    name = _get(d, "name", "")
    spec = parse_spec(_get(d, "spec", ""))
    raw = _get(d, "policy", "")
    if isinstance(raw, dict):
        policies = (_parse_policy(raw, "policy"),)
    elif isinstance(raw, list):
        policies = tuple(_parse_policy(p, f"policy[{k}]") for k, p in enumerate(raw))
    else:
        raise ConfigError("policy", "expected an object or an array of objects")
    s = _get(d, "sim", "", {})
    init = _get(s, "initial_interference", "sim", "stationary")
    if init == "stationary":
        init_index = None
    else:
        init_index = _integer(init, "sim.initial_interference") - 1
    max_slots = _get(s, "max_slots", "sim", None)
    sim = SimSettings(
        replications=_integer(_get(s, "replications", "sim", 2000), "sim.replications"),
        base_seed=_integer(_get(s, "base_seed", "sim", 0), "sim.base_seed"),
        max_slots=None if max_slots is None else _integer(max_slots, "sim.max_slots"),
        initial_interference=init_index,
    )
    if sim.replications < 1:
        raise ConfigError("sim.replications", "must be >= 1")
    sweep = None
    if d.get("sweep") is not None:
        sw = d["sweep"]
        sweep = Sweep(
            _get(sw, "parameter", "sweep"),
            _numbers(_get(sw, "values", "sweep"), "sweep.values"),
        )
    return Scenario(name, spec, policies, sim, sweep, d.get("description", ""))


# ---------------------------------------------------------- serialization


def _cost_dict(c) -> dict:
    if isinstance(c, LinearCost):
        return {"linear": c.slope}
    return {"table": list(c.values)}


def _success_dict(s: SuccessFunction) -> dict:
    out: dict[str, Any] = {"family": s.family}
    if s.family == "exponential":
        out["scale"] = s.scale
    elif s.family == "sigmoidal":
        out.update(beta0=s.beta0, beta1=s.beta1, beta2=s.beta2)
    elif s.family == "constant":
        out["value"] = s.value
    return out


def spec_to_dict(spec: SystemSpec) -> dict:
    return {
        "B": spec.B,
        "D": spec.D,
        "powers": list(spec.powers.levels),
        "costs": {
            "power": _cost_dict(spec.costs.power_cost),
            "backlog": _cost_dict(spec.costs.backlog_cost),
            "drop": spec.costs.drop_cost,
        },
        "success": _success_dict(spec.success),
        "interference": {
            "levels": list(spec.interference.levels),
            "transition": [list(r) for r in spec.interference.transition],
            "subslots_per_slot": spec.interference.subslots_per_slot,
        },
        "arrival_prob": spec.arrival_prob,
    }


def scenario_to_dict(sc: Scenario) -> dict:
    policies = []
    for p in sc.policies:
        entry: dict[str, Any] = {"kind": p.kind}
        for key in ("alpha", "k_slope", "i_ref", "p_change"):
            if getattr(p, key) is not None:
                entry[key] = getattr(p, key)
        policies.append(entry)
    init = sc.sim.initial_interference
    out = {
        "name": sc.name,
        "description": sc.description,
        "spec": spec_to_dict(sc.spec),
        "policy": policies,
        "sim": {
            "replications": sc.sim.replications,
            "base_seed": sc.sim.base_seed,
            "max_slots": sc.sim.max_slots,
            "initial_interference": "stationary" if init is None else init + 1,
        },
    }
    if sc.sweep is not None:
        out["sweep"] = {"parameter": sc.sweep.parameter, "values": list(sc.sweep.values)}
    return out


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"invalid JSON: {exc}") from None
    return parse_scenario(data)


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2)


# ---------------------------------------------------------------- canned


def canned_names() -> list[str]:
    files = resources.files("holpower").joinpath("canned")
    return sorted(f.name[:-5] for f in files.iterdir() if f.name.endswith(".json"))


def load_canned(name: str) -> Scenario:
    f = resources.files("holpower").joinpath("canned", f"{name}.json")
    if not f.is_file():
        raise KeyError(f"no canned scenario named {name!r}; try one of {canned_names()}")
    return parse_scenario(json.loads(f.read_text()))
