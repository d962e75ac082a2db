"""Trainer command line: train | evaluate | export.

The environment comes from a perishsim configuration file; the trainer
spawns `perishsim serve-env --stdio` and speaks the line protocol.
"""

from __future__ import annotations

import argparse
import json
import sys

from .client import EnvClient
from .trainer import (
    PpoConfig,
    evaluate_policy,
    export_policy_actions,
    load_checkpoint,
    train,
)


def cmd_train(args) -> int:
    config = PpoConfig(
        total_steps=args.steps,
        seed=args.seed,
        rollout_steps=args.rollout,
        learning_rate=args.lr,
        eval_episodes=args.eval_episodes,
        checkpoint_path=args.checkpoint,
        curve_path=args.curve,
    )
    with EnvClient.for_config(args.config) as client:
        report, _ = train(config, client)
    if args.report:
        report.save(args.report)
    final = report.final_eval
    sys.stdout.write(
        f"trained {report.curve[-1]['env_steps'] if report.curve else 0} steps; "
        f"final mean cost {final['mean_cost']:.2f} over {final['episodes']} episodes "
        f"(random baseline {report.random_baseline['mean_cost']:.2f})\n"
    )
    if report.aborted:
        sys.stdout.write(f"aborted: {report.aborted}\n")
        return 1
    return 0


def cmd_evaluate(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    with EnvClient.for_config(args.config) as client:
        result = evaluate_policy(client, model, args.episodes, seed=args.seed)
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0


def cmd_export(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    with EnvClient.for_config(args.config) as client:
        summary = export_policy_actions(
            model, client, seed=args.seed, trace_path=args.out, obs_path=args.obs
        )
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppotrainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train")
    p.add_argument("--config", required=True, help="perishsim configuration file")
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rollout", type=int, default=4096)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--eval-episodes", type=int, default=500)
    p.add_argument("--checkpoint", default="ppo_checkpoint.pt")
    p.add_argument("--curve", default=None, help="write the learning curve CSV here")
    p.add_argument("--report", default=None, help="write the full train report JSON here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="action trace CSV path")
    p.add_argument("--obs", default=None, help="optional observations .npz path")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except Exception as exc:
        sys.stderr.write(f"runtime error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
