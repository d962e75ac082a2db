"""Configuration files: a single JSON document with sections ``env``,
``costs``, ``demand``, ``policies``, ``eval``, ``bounds``, ``bridge`` and an
optional ``grid``. A named profile supplies base values; explicit settings
override it. Normalization fills every default, so parse -> serialize ->
parse is the identity.
"""

from __future__ import annotations

import copy
import json
import os

import numpy as np

from .demand import DemandScenario, LifecycleConfig, NoiseModel, lifecycle_forecast, load_forecast
from .env import CostRates, EnvParams
from .evaluator import EvalConfig
from .policies import Policy, make_policy


class ConfigError(ValueError):
    """Invalid configuration; the message carries the field path."""


DEFAULTS: dict = {
    "profile": None,
    "env": {
        "T": 60,
        "L": 2,
        "m": 2,
        "Q": 1.0,
        "n_max": None,
        "yield_max": 0.0,
        "batch_costs": [0.0],
    },
    "costs": {"c_hat": 0.0, "h_hat": 1.0, "b_hat": 100.0, "w_hat": 2.0},
    "demand": {
        "kind": "lifecycle",
        "peak": 20.0,
        "base": 0.0,
        "fractions": [0.25, 0.35, 0.40],
        "growth_shape": 10.0,
        "forecast": None,
        "forecast_file": None,
        "noise": {
            "kind": "worst_case",
            "level": 0.15,
            "sigma": None,
            "floor_at_zero": True,
            "integer_demand": False,
        },
    },
    "policies": [],
    "eval": {"episodes": 2000, "seed": 12345, "crn": True, "parallel": 1, "pil_n_paths": 200},
    "bounds": {"margin": 2},
    "bridge": {"normalize": False},
    "grid": None,
}

# Base-case constants of the industrial setting plus the two study grids.
PROFILES: dict[str, dict] = {
    "base-case": {
        "env": {
            "T": 240,
            "L": 12,
            "m": 12,
            "Q": 20.0,
            "n_max": 6,
            "yield_max": 0.10,
            "batch_costs": [0.0, 5.0, 8.0, 9.0, 10.0],
        },
        "costs": {"c_hat": 0.0, "h_hat": 1.0, "b_hat": 100.0, "w_hat": 3.0},
        "demand": {
            "kind": "lifecycle",
            "peak": 100.0,
            "base": 0.0,
            "fractions": [0.25, 0.35, 0.40],
            "growth_shape": 10.0,
            "noise": {"kind": "balanced", "level": 0.15},
        },
        # planner baseline: 99% service factor plus a yield hedge covering
        # the worst-case production loss over one replenishment window at
        # peak demand (z_max * (L+1) * peak)
        "policies": [{"kind": "planner", "k2": 130.0, "mode": "static_replay"}],
    },
    "scenario1": {
        "env": {
            "T": 60,
            "L": 2,
            "m": 2,
            "Q": 1.0,
            "n_max": None,
            "yield_max": 0.0,
            "batch_costs": [0.0],
        },
        "costs": {"c_hat": 0.0, "h_hat": 1.0, "b_hat": 100.0, "w_hat": 2.0},
        "demand": {
            "kind": "lifecycle",
            "peak": 20.0,
            "base": 4.0,
            "fractions": [0.30, 0.30, 0.40],
            "growth_shape": 10.0,
            "noise": {"kind": "worst_case", "level": 0.15},
        },
        "grid": {
            "axes": {
                "m": [2, 3, 4],
                "w_hat": [2.0, 4.0],
                "b_hat": [10.0, 50.0, 100.0, 1000.0],
            },
            "optimize": ["out", "pil"],
            "reference": "out",
        },
    },
}

_GRID_AXES = ("m", "L", "T", "w_hat", "b_hat", "c_hat", "h_hat", "yield_max", "noise_kind", "noise_level", "peak")


_CLOSED_SECTIONS = ("env", "costs", "demand", "demand.noise", "eval", "bounds", "bridge")


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base and path in _CLOSED_SECTIONS:
            raise ConfigError(f"{where}: unknown setting")
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _require(cond: bool, where: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{where}: {message}")


def _check_number(cfg: dict, section: str, key: str, minimum=None, integer=False, allow_none=False):
    value = cfg[section][key]
    where = f"{section}.{key}"
    if value is None:
        _require(allow_none, where, "must not be null")
        return
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), where, "must be a number")
    if integer:
        _require(float(value).is_integer(), where, "must be an integer")
    if minimum is not None:
        _require(value >= minimum, where, f"must be >= {minimum}")


def normalize_config(raw: dict) -> dict:
    """Apply profile and defaults, validate, and return the fully explicit
    configuration dictionary."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    profile_name = raw.get("profile")
    base = copy.deepcopy(DEFAULTS)
    if profile_name is not None:
        if profile_name not in PROFILES:
            raise ConfigError(f"profile: unknown profile {profile_name!r}")
        base = _merge(base, PROFILES[profile_name])
    cfg = _merge(base, raw)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    _check_number(cfg, "env", "T", minimum=1, integer=True)
    _check_number(cfg, "env", "L", minimum=0, integer=True)
    _check_number(cfg, "env", "m", minimum=1, integer=True)
    _check_number(cfg, "env", "Q", minimum=1e-12)
    _check_number(cfg, "env", "n_max", minimum=0, integer=True, allow_none=True)
    _check_number(cfg, "env", "yield_max", minimum=0.0)
    _require(cfg["env"]["yield_max"] < 1.0, "env.yield_max", "must be < 1")
    _require(cfg["env"]["T"] > cfg["env"]["L"], "env.T", "must exceed env.L")
    costs_list = cfg["env"]["batch_costs"]
    _require(isinstance(costs_list, list) and costs_list, "env.batch_costs", "must be a nonempty list")
    _require(costs_list[0] == 0, "env.batch_costs", "must start at 0")
    _require(
        all(b >= a for a, b in zip(costs_list, costs_list[1:])),
        "env.batch_costs",
        "must be non-decreasing",
    )
    for key in ("c_hat", "h_hat", "b_hat", "w_hat"):
        _check_number(cfg, "costs", key, minimum=0.0)
    _require(
        cfg["costs"]["b_hat"] >= cfg["costs"]["c_hat"],
        "costs.b_hat",
        "must be >= costs.c_hat (transformed lost-sales rate would be negative)",
    )
    demand = cfg["demand"]
    _require(demand["kind"] in ("lifecycle", "explicit", "file"), "demand.kind", "must be lifecycle, explicit, or file")
    if demand["kind"] == "lifecycle":
        _check_number(cfg, "demand", "peak", minimum=1e-12)
        _check_number(cfg, "demand", "base", minimum=0.0)
        fr = demand["fractions"]
        _require(
            isinstance(fr, list) and len(fr) == 3 and all(isinstance(x, (int, float)) for x in fr),
            "demand.fractions",
            "must be a list of three numbers",
        )
        _require(abs(sum(fr) - 1.0) < 1e-9 and all(x >= 0 for x in fr), "demand.fractions", "must be nonnegative and sum to 1")
    elif demand["kind"] == "explicit":
        _require(isinstance(demand.get("forecast"), list) and demand["forecast"], "demand.forecast", "must be a nonempty list")
    else:
        _require(isinstance(demand.get("forecast_file"), str), "demand.forecast_file", "must be a path")
    noise = demand["noise"]
    _require(noise["kind"] in ("worst_case", "balanced", "custom"), "demand.noise.kind", "must be worst_case, balanced, or custom")
    _require(noise["level"] >= 0, "demand.noise.level", "must be >= 0")
    _require(isinstance(cfg["policies"], list), "policies", "must be a list")
    for i, spec in enumerate(cfg["policies"]):
        _require(isinstance(spec, dict) and "kind" in spec, f"policies[{i}]", "must be an object with a 'kind'")
    _check_number(cfg, "eval", "episodes", minimum=1, integer=True)
    _check_number(cfg, "eval", "seed", integer=True)
    _check_number(cfg, "eval", "parallel", minimum=1, integer=True)
    _check_number(cfg, "eval", "pil_n_paths", minimum=1, integer=True)
    _check_number(cfg, "bounds", "margin", minimum=0, integer=True)
    _require(isinstance(cfg["bridge"]["normalize"], bool), "bridge.normalize", "must be a boolean")
    grid = cfg.get("grid")
    if grid is not None:
        _require(isinstance(grid, dict) and isinstance(grid.get("axes"), dict), "grid.axes", "must be an object")
        for axis, values in grid["axes"].items():
            _require(axis in _GRID_AXES, f"grid.axes.{axis}", f"unknown axis (allowed: {', '.join(_GRID_AXES)})")
            _require(isinstance(values, list) and values, f"grid.axes.{axis}", "must be a nonempty list")
        for kind in grid.get("optimize", []):
            _require(kind in ("out", "pil"), "grid.optimize", "entries must be 'out' or 'pil'")


def load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return normalize_config(raw)


def serialize_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def build_env_params(cfg: dict) -> EnvParams:
    env = cfg["env"]
    return EnvParams(
        horizon=int(env["T"]),
        lead_time=int(env["L"]),
        lifetime=int(env["m"]),
        batch_size=float(env["Q"]),
        max_batches=None if env["n_max"] is None else int(env["n_max"]),
        yield_max=float(env["yield_max"]),
        batch_costs=tuple(float(k) for k in env["batch_costs"]),
    )


def build_rates(cfg: dict) -> CostRates:
    c = cfg["costs"]
    return CostRates(
        c_hat=float(c["c_hat"]),
        h_hat=float(c["h_hat"]),
        b_hat=float(c["b_hat"]),
        w_hat=float(c["w_hat"]),
    )


def build_scenario(cfg: dict, base_dir: str = ".") -> DemandScenario:
    demand = cfg["demand"]
    if demand["kind"] == "lifecycle":
        peak, base = float(demand["peak"]), float(demand["base"])
        _require(base < peak, "demand.base", "must be below demand.peak")
        shape = lifecycle_forecast(
            LifecycleConfig(
                horizon=int(cfg["env"]["T"]),
                peak=peak - base,
                growth_frac=float(demand["fractions"][0]),
                maturity_frac=float(demand["fractions"][1]),
                decline_frac=float(demand["fractions"][2]),
                growth_shape=float(demand["growth_shape"]),
            )
        )
        forecast = base + shape
    elif demand["kind"] == "explicit":
        forecast = np.asarray(demand["forecast"], dtype=float)
    else:
        path = demand["forecast_file"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        if not os.path.exists(path):
            raise ConfigError(f"demand.forecast_file: file not found: {path}")
        forecast = load_forecast(path)
    if forecast.size != int(cfg["env"]["T"]):
        raise ConfigError(
            f"demand: forecast length {forecast.size} does not match env.T {cfg['env']['T']}"
        )
    noise_cfg = demand["noise"]
    noise = NoiseModel(
        kind=noise_cfg["kind"],
        level=float(noise_cfg["level"]),
        sigma=None if noise_cfg.get("sigma") is None else tuple(noise_cfg["sigma"]),
        floor_at_zero=bool(noise_cfg.get("floor_at_zero", True)),
        integer_demand=bool(noise_cfg.get("integer_demand", False)),
    )
    return DemandScenario(forecast=forecast, noise=noise)


def build_policies(cfg: dict, base_dir: str = ".") -> list[Policy]:
    policies = []
    for spec in cfg["policies"]:
        spec = dict(spec)
        if spec.get("kind") == "replay" and "plan_file" in spec and not os.path.isabs(spec["plan_file"]):
            spec["plan_file"] = os.path.join(base_dir, spec["plan_file"])
        policies.append(make_policy(spec))
    return policies


def build_eval_config(cfg: dict, seed=None, episodes=None, parallel=None) -> EvalConfig:
    ev = cfg["eval"]
    return EvalConfig(
        n_episodes=int(episodes if episodes is not None else ev["episodes"]),
        master_seed=int(seed if seed is not None else ev["seed"]),
        crn=bool(ev["crn"]),
        parallel=int(parallel if parallel is not None else ev["parallel"]),
    )


def bounds_conforming(cfg: dict, scenario: DemandScenario) -> tuple[bool, str]:
    """The analytic bounds assume no batch cost, no yield loss, and a
    constant forecast-error std; anything else is advisory only."""
    reasons = []
    if any(k != 0 for k in cfg["env"]["batch_costs"]):
        reasons.append("batch ordering costs are nonzero")
    if cfg["env"]["yield_max"] != 0:
        reasons.append("yield loss is enabled")
    sigma = scenario.sigma()
    if sigma.size and float(sigma.max() - sigma.min()) > 1e-12:
        reasons.append("forecast-error std varies over time")
    return (not reasons, "; ".join(reasons))
