"""Command-line front end.

Subcommands: simulate | bounds | optimize | experiment | report | serve-env.
Exit codes: 0 success, 1 runtime failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


from . import experiment as exp
from .bounds import bounds_report
from .config import (
    ConfigError,
    bounds_conforming,
    build_env_params,
    build_eval_config,
    build_policies,
    build_rates,
    build_scenario,
    load_config,
    serialize_config,
)
from .evaluator import evaluate_policies, optimize_parameter, run_episode
from .bridge import serve_socket, serve_stdio

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID = 2


def _load_bundle(args):
    cfg = load_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    params = build_env_params(cfg)
    rates = build_rates(cfg)
    scenario = build_scenario(cfg, base_dir)
    return cfg, base_dir, params, rates, scenario


def _pick_policy(policies, wanted: str | None):
    if not policies:
        raise ConfigError("policies: at least one policy is required for this command")
    if wanted is None:
        return policies[0]
    for p in policies:
        if p.kind == wanted:
            return p
    raise ConfigError(f"policies: no policy of kind {wanted!r} configured")


def cmd_simulate(args) -> int:
    cfg, base_dir, params, rates, scenario = _load_bundle(args)
    policies = build_policies(cfg, base_dir)
    policy = _pick_policy(policies, args.policy)
    eval_cfg = build_eval_config(cfg, seed=args.seed, episodes=args.episodes, parallel=args.parallel)
    result = evaluate_policies([policy], params, rates, scenario, eval_cfg)[0]
    if args.trace:
        ledger = run_episode(params, rates, scenario, policy, eval_cfg.master_seed, 0)
        with open(args.trace, "w", encoding="utf-8", newline="") as fh:
            fh.write("t,order_units,order_batches,yield,arrived,demand,sales,lost,expired,transformed_cost\n")
            for o in ledger.outcomes:
                fh.write(
                    f"{o.t},{o.order_units!r},{o.order_batches},{o.yield_draw!r},{o.arrived_units!r},"
                    f"{o.demand!r},{o.sales!r},{o.lost_sales!r},{o.expired!r},{o.transformed.total()!r}\n"
                )
    summary = {
        "policy": result.policy,
        "episodes": result.n_episodes,
        "seed": eval_cfg.master_seed,
        "mean_transformed_cost": result.mean,
        "std": result.std,
        "se": result.se,
        "components": result.components,
        "service_level": result.service_level,
    }
    if args.json:
        sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    else:
        sys.stdout.write(
            f"policy {result.policy}: n={result.n_episodes} seed={eval_cfg.master_seed}\n"
            f"  mean transformed cost {result.mean!r} (std {result.std!r}, se {result.se!r})\n"
            f"  components: "
            + " ".join(f"{k}={v!r}" for k, v in sorted(result.components.items()))
            + "\n"
            f"  service level {result.service_level!r}\n"
        )
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg, base_dir, params, rates, scenario = _load_bundle(args)
    ok, reason = bounds_conforming(cfg, scenario)
    if not ok and not args.advisory:
        sys.stderr.write(
            f"error: configuration violates the bound assumptions ({reason}); pass --advisory to proceed\n"
        )
        return EXIT_INVALID
    header = "policy,sigma,argmin_lb,argmin_ub,interval_lo,interval_hi,grid_argmin_lb,grid_argmin_ub"
    lines = [header]
    ctx = exp.bound_context_for(cfg, scenario, params, rates)
    for kind in ("out", "pil"):
        report = bounds_report(kind, ctx, margin=int(cfg["bounds"]["margin"]))
        lines.append(
            ",".join(
                [
                    kind,
                    repr(ctx.sigma),
                    repr(report.argmin_lb),
                    repr(report.argmin_ub),
                    str(report.interval[0]),
                    str(report.interval[1]),
                    str(report.grid_argmin_lb),
                    str(report.grid_argmin_ub),
                ]
            )
        )
    text = "\n".join(lines) + "\n"
    if not ok:
        text = "# advisory: " + reason + "\n" + text
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg, base_dir, params, rates, scenario = _load_bundle(args)
    eval_cfg = build_eval_config(cfg, seed=args.seed, episodes=args.episodes, parallel=args.parallel)
    ctx = exp.bound_context_for(cfg, scenario, params, rates)
    from .bounds import search_interval

    interval = search_interval(args.policy, ctx, margin=int(cfg["bounds"]["margin"]))
    search = optimize_parameter(
        args.policy,
        interval,
        params,
        rates,
        scenario,
        eval_cfg,
        pil_n_paths=int(cfg["eval"]["pil_n_paths"]),
    )
    if args.json:
        sys.stdout.write(
            json.dumps(
                {
                    "policy": args.policy,
                    "best_param": search.best_param,
                    "mean_cost": search.best.mean,
                    "se_cost": search.best.se,
                    "interval": list(search.interval),
                    "curve": search.curve(),
                },
                sort_keys=True,
            )
            + "\n"
        )
        return EXIT_OK
    sys.stdout.write(f"search interval [{interval[0]}, {interval[1]}] (evaluated {search.interval})\n")
    for value, mean, se in search.curve():
        sys.stdout.write(f"  {args.policy} param {value:g}: mean {mean!r} (se {se!r})\n")
    sys.stdout.write(f"chosen {args.policy} parameter: {search.best_param:g} (mean {search.best.mean!r})\n")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg, base_dir, params, rates, scenario = _load_bundle(args)
    os.makedirs(args.out, exist_ok=True)
    ok, failed = exp.run_experiment(
        cfg,
        args.out,
        base_dir=base_dir,
        seed=args.seed,
        episodes=args.episodes,
        parallel=args.parallel,
        resume=not args.no_resume,
    )
    sys.stdout.write(f"experiment finished: {ok} cells ok, {failed} failed; reports in {args.out}\n")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


def cmd_report(args) -> int:
    results = exp.load_results(args.results)
    out_dir = args.out or args.results
    os.makedirs(out_dir, exist_ok=True)
    reference = args.reference
    exp.write_report_csv(os.path.join(out_dir, "report.csv"), results)
    exp.write_text_report(os.path.join(out_dir, "report.txt"), results)
    exp.write_plot_csv(os.path.join(out_dir, "plot_costs.csv"), results)
    if reference:
        exp.write_gap_csv(os.path.join(out_dir, "gaps.csv"), results, reference)
    sys.stdout.write(f"report written to {out_dir}\n")
    return EXIT_OK


def cmd_serve_env(args) -> int:
    cfg, base_dir, params, rates, scenario = _load_bundle(args)
    normalize = bool(cfg["bridge"]["normalize"])
    if args.stdio:
        serve_stdio(params, rates, scenario, normalize=normalize)
        return EXIT_OK
    if args.port is None:
        sys.stderr.write("error: serve-env needs --stdio or --port\n")
        return EXIT_INVALID

    def announce(port):
        sys.stderr.write(f"serving on 127.0.0.1:{port}\n")
        sys.stderr.flush()

    serve_socket(params, rates, scenario, port=args.port, normalize=normalize, ready_callback=announce)
    return EXIT_OK


def cmd_show_config(args) -> int:
    cfg = load_config(args.config)
    sys.stdout.write(serialize_config(cfg))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perishsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, episodes=True):
        p.add_argument("--config", required=True, help="path to the JSON configuration")
        p.add_argument("--seed", type=int, default=None, help="override eval.seed")
        if episodes:
            p.add_argument("--episodes", type=int, default=None, help="override eval.episodes")
        p.add_argument("--parallel", type=int, default=None, help="override eval.parallel")

    p = sub.add_parser("simulate", help="evaluate one configured policy")
    add_common(p)
    p.add_argument("--policy", default=None, help="policy kind to run (default: first configured)")
    p.add_argument("--trace", default=None, help="write a per-period trace of episode 0 to this CSV")
    p.add_argument("--json", action="store_true", help="emit a JSON summary")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bounds", help="print bound minimizers and search intervals")
    p.add_argument("--config", required=True)
    p.add_argument("--advisory", action="store_true", help="allow non-conforming configurations")
    p.add_argument("--out", default=None, help="also write the table to this file")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("optimize", help="bounds-guided grid search for a safety stock")
    add_common(p)
    p.add_argument("--policy", required=True, choices=("out", "pil"))
    p.add_argument("--json", action="store_true", help="emit a JSON result")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("experiment", help="run the configured grid and write reports")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-resume", action="store_true", help="recompute cells even if results exist")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="re-render reports from an experiment directory")
    p.add_argument("--results", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--reference", default=None, help="reference policy for the gap table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve-env", help="serve the environment over the line protocol")
    p.add_argument("--config", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--stdio", action="store_true")
    group.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve_env)

    p = sub.add_parser("show-config", help="print the normalized configuration")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_show_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # runtime failure
        sys.stderr.write(f"runtime error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
