"""Experiment grids: expand parameter sweeps into cells, run each cell
(bounds-guided searches plus any configured reference policies), and render
the results as diff-friendly CSV and text reports.

Cell results are written as individual JSON files, so an interrupted run
resumes by skipping finished cells; failed cells are marked and the rest of
the grid continues.
"""

from __future__ import annotations

import copy
import itertools
import json
import os

import numpy as np

from .bounds import BoundContext, bounds_report, search_interval
from .config import build_env_params, build_eval_config, build_policies, build_rates, build_scenario
from .evaluator import EvalResult, evaluate_policies, optimize_parameter

REPORT_COLUMNS = [
    "cell",
    "noise",
    "T",
    "L",
    "m",
    "Q",
    "n_max",
    "yield_max",
    "c_hat",
    "h_hat",
    "b_hat",
    "w_hat",
    "policy",
    "param_value",
    "mean_cost",
    "std_cost",
    "se_cost",
    "holding",
    "lost_sales",
    "expiration",
    "fixed_order",
    "service_level",
]

_ENV_AXES = {"m", "L", "T", "yield_max"}
_COST_AXES = {"w_hat", "b_hat", "c_hat", "h_hat"}


def expand_grid(cfg: dict) -> list[dict]:
    """All grid cells as {axis: value} dicts, in declaration order."""
    grid = cfg.get("grid")
    if not grid:
        raise ValueError("configuration has no grid section")
    axes = grid["axes"]
    names = list(axes)
    cells = []
    for combo in itertools.product(*(axes[name] for name in names)):
        cells.append(dict(zip(names, combo)))
    return cells


def cell_id(cell: dict) -> str:
    # doubles as a file stem and a CSV field, so no commas or slashes
    return "__".join(f"{k}={v}" for k, v in cell.items())


def apply_cell(cfg: dict, cell: dict) -> dict:
    out = copy.deepcopy(cfg)
    for axis, value in cell.items():
        if axis in _ENV_AXES:
            out["env"][axis] = value
        elif axis in _COST_AXES:
            out["costs"][axis] = value
        elif axis == "noise_kind":
            out["demand"]["noise"]["kind"] = value
        elif axis == "noise_level":
            out["demand"]["noise"]["level"] = value
        elif axis == "peak":
            out["demand"]["peak"] = value
        else:
            raise ValueError(f"unknown grid axis {axis!r}")
    return out


def bound_context_for(cfg: dict, scenario, params, rates) -> BoundContext:
    sigma = scenario.sigma()
    return BoundContext(
        horizon=params.horizon,
        lead_time=params.lead_time,
        lifetime=params.lifetime,
        h=rates.h,
        b=rates.b,
        w=rates.w,
        sigma=float(sigma.max()) if sigma.size else 0.0,
        forecast=scenario.forecast,
    )


def _result_entry(res: EvalResult, policy_label: str, param_value) -> dict:
    return {
        "policy": policy_label,
        "param_value": param_value,
        "mean_cost": res.mean,
        "std_cost": res.std,
        "se_cost": res.se,
        "holding": res.components["holding"],
        "lost_sales": res.components["lost_sales"],
        "expiration": res.components["expiration"],
        "fixed_order": res.components["ordering_fixed"],
        "service_level": res.service_level,
        "n_episodes": res.n_episodes,
    }


def run_cell(cfg: dict, cell: dict, base_dir: str, seed=None, episodes=None, parallel=None) -> dict:
    """Run one grid cell: parameter searches for the requested families and
    an evaluation of every configured policy, under shared random paths."""
    cell_cfg = apply_cell(cfg, cell)
    params = build_env_params(cell_cfg)
    rates = build_rates(cell_cfg)
    scenario = build_scenario(cell_cfg, base_dir)
    eval_cfg = build_eval_config(cell_cfg, seed=seed, episodes=episodes, parallel=parallel)
    ctx = bound_context_for(cell_cfg, scenario, params, rates)
    margin = int(cell_cfg["bounds"]["margin"])
    pil_paths = int(cell_cfg["eval"]["pil_n_paths"])

    entries = []
    bounds_info = {}
    episode_dumps = {}
    for kind in cell_cfg.get("grid", {}).get("optimize", []):
        interval = search_interval(kind, ctx, margin=margin)
        search = optimize_parameter(
            kind, interval, params, rates, scenario, eval_cfg, pil_n_paths=pil_paths
        )
        report = bounds_report(kind, ctx, margin=margin)
        bounds_info[kind] = {
            "argmin_lb": report.argmin_lb,
            "argmin_ub": report.argmin_ub,
            "interval": list(search.interval),
            "chosen": search.best_param,
            "curve": search.curve(),
        }
        entries.append(_result_entry(search.best, kind, search.best_param))
        episode_dumps[kind] = search.best.per_episode
    policies = build_policies(cell_cfg, base_dir)
    if policies:
        results = evaluate_policies(policies, params, rates, scenario, eval_cfg)
        for policy, res in zip(policies, results):
            label = policy.kind
            entries.append(_result_entry(res, label, None))
            episode_dumps[label] = res.per_episode
    return {
        "cell": cell,
        "cell_id": cell_id(cell),
        "status": "ok",
        "seed": eval_cfg.master_seed,
        "episodes": eval_cfg.n_episodes,
        "env": {
            "T": params.horizon,
            "L": params.lead_time,
            "m": params.lifetime,
            "Q": params.batch_size,
            "n_max": params.max_batches,
            "yield_max": params.yield_max,
        },
        "costs": dict(cell_cfg["costs"]),
        "noise": cell_cfg["demand"]["noise"]["kind"],
        "bounds": bounds_info,
        "policies": entries,
        "_episode_dumps": episode_dumps,
    }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(path: str, cell_results: list[dict]) -> None:
    lines = [",".join(REPORT_COLUMNS)]
    for res in cell_results:
        if res["status"] != "ok":
            continue
        meta = [
            res["cell_id"],
            res["noise"],
            res["env"]["T"],
            res["env"]["L"],
            res["env"]["m"],
            res["env"]["Q"],
            res["env"]["n_max"],
            res["env"]["yield_max"],
            res["costs"]["c_hat"],
            res["costs"]["h_hat"],
            res["costs"]["b_hat"],
            res["costs"]["w_hat"],
        ]
        for entry in res["policies"]:
            row = meta + [
                entry["policy"],
                entry["param_value"],
                entry["mean_cost"],
                entry["std_cost"],
                entry["se_cost"],
                entry["holding"],
                entry["lost_sales"],
                entry["expiration"],
                entry["fixed_order"],
                entry["service_level"],
            ]
            lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_gap_csv(path: str, cell_results: list[dict], reference: str) -> None:
    lines = ["cell,policy,mean_cost,reference,reference_mean,gap_pct"]
    for res in cell_results:
        if res["status"] != "ok":
            continue
        by_policy = {e["policy"]: e for e in res["policies"]}
        if reference not in by_policy:
            continue
        ref_mean = by_policy[reference]["mean_cost"]
        if ref_mean == 0:
            continue
        for entry in res["policies"]:
            if entry["policy"] == reference:
                continue
            gap = (entry["mean_cost"] - ref_mean) / ref_mean * 100.0
            lines.append(
                ",".join(
                    [
                        res["cell_id"],
                        entry["policy"],
                        repr(entry["mean_cost"]),
                        reference,
                        repr(ref_mean),
                        repr(gap),
                    ]
                )
            )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_text_report(path: str, cell_results: list[dict]) -> None:
    lines = []
    for res in cell_results:
        if res["status"] != "ok":
            lines.append(f"[FAILED] {res['cell_id']}: {res.get('error', 'unknown error')}")
            continue
        lines.append(f"cell {res['cell_id']} (noise={res['noise']}, episodes={res['episodes']})")
        for entry in res["policies"]:
            param = "" if entry["param_value"] is None else f" param={entry['param_value']:g}"
            lines.append(
                f"  {entry['policy']:<8}{param:<12} cost {entry['mean_cost']:>12.2f} +- {entry['std_cost']:<10.2f}"
                f" service {entry['service_level']:.4f}"
            )
        for kind, info in res.get("bounds", {}).items():
            lines.append(
                f"  bounds[{kind}]: argmin_lb={info['argmin_lb']:.3f} argmin_ub={info['argmin_ub']:.3f}"
                f" interval={info['interval']} chosen={info['chosen']:g}"
            )
        lines.append("")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _strip_dumps(result: dict) -> dict:
    return {k: v for k, v in result.items() if not k.startswith("_")}


def run_experiment(
    cfg: dict,
    out_dir: str,
    base_dir: str = ".",
    seed=None,
    episodes=None,
    parallel=None,
    resume: bool = True,
) -> tuple[int, int]:
    """Run every grid cell, writing per-cell JSON, per-episode dumps, and the
    combined reports. Returns (ok_cells, failed_cells)."""
    cells = expand_grid(cfg)
    cells_dir = os.path.join(out_dir, "cells")
    episodes_dir = os.path.join(out_dir, "episodes")
    os.makedirs(cells_dir, exist_ok=True)
    os.makedirs(episodes_dir, exist_ok=True)

    results = []
    for cell in cells:
        cid = cell_id(cell)
        cell_path = os.path.join(cells_dir, cid + ".json")
        if resume and os.path.exists(cell_path):
            with open(cell_path, "r", encoding="utf-8") as fh:
                results.append(json.load(fh))
            continue
        try:
            result = run_cell(cfg, cell, base_dir, seed=seed, episodes=episodes, parallel=parallel)
            for label, costs in result["_episode_dumps"].items():
                dump_path = os.path.join(episodes_dir, f"{cid}__{label}.csv")
                with open(dump_path, "w", encoding="utf-8", newline="") as fh:
                    fh.write("episode,transformed_total\n")
                    for i, c in enumerate(np.asarray(costs)):
                        fh.write(f"{i},{float(c)!r}\n")
        except Exception as exc:  # cell failures are marked, the grid continues
            result = {"cell": cell, "cell_id": cid, "status": "failed", "error": str(exc)}
        result = _strip_dumps(result)
        with open(cell_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(json.dumps(result, indent=2, sort_keys=True) + "\n")
        results.append(result)

    write_reports(cfg, out_dir, results)
    ok = sum(1 for r in results if r["status"] == "ok")
    return ok, len(results) - ok


def write_plot_csv(path: str, cell_results: list[dict]) -> None:
    """Bar-plot-ready data: one row per (cell, policy) with mean and std."""
    lines = ["cell,policy,mean_cost,std_cost"]
    for res in cell_results:
        if res["status"] != "ok":
            continue
        for entry in res["policies"]:
            lines.append(
                ",".join(
                    [res["cell_id"], entry["policy"], repr(entry["mean_cost"]), repr(entry["std_cost"])]
                )
            )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_reports(cfg: dict, out_dir: str, results: list[dict]) -> None:
    write_report_csv(os.path.join(out_dir, "report.csv"), results)
    write_text_report(os.path.join(out_dir, "report.txt"), results)
    write_plot_csv(os.path.join(out_dir, "plot_costs.csv"), results)
    grid = cfg.get("grid") or {}
    reference = grid.get("reference")
    if reference:
        write_gap_csv(os.path.join(out_dir, "gaps.csv"), results, reference)


def load_results(results_dir: str) -> list[dict]:
    cells_dir = os.path.join(results_dir, "cells")
    if not os.path.isdir(cells_dir):
        raise FileNotFoundError(f"no cells directory under {results_dir}")
    results = []
    for name in sorted(os.listdir(cells_dir)):
        if name.endswith(".json"):
            with open(os.path.join(cells_dir, name), "r", encoding="utf-8") as fh:
                results.append(json.load(fh))
    if not results:
        raise FileNotFoundError(f"no cell results under {results_dir}")
    return results
