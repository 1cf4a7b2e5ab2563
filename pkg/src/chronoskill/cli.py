"""Command-line entry point: ``chronoskill {train,eval,compare,traj,plot}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .checkpoint import load_checkpoint
from .config import RunConfig, load_config
from .envs import ENV_NAMES
from .errors import ChronoskillError
from .harness import compare, dump_trajectory, evaluate, run_training
from .plotting import plot_curves
from .policy import MULTI_HEAD, TIME_OBS, VANILLA

VARIANTS = (VANILLA, TIME_OBS, MULTI_HEAD)


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _run_config(args) -> RunConfig:
    """A config file, with any explicit flags applied on top."""
    if args.config:
        config = load_config(args.config)
        env = args.env or config.env
        variant = args.variant or config.policy.variant
        heads = args.heads if args.heads is not None else (
            config.policy.heads if variant == config.policy.variant else None)
        ppo = dataclasses.asdict(config.ppo)
        if env != config.env:
            ppo.pop("steps_per_iter")
        base = dict(policy={"trunk_widths": config.policy.trunk_widths}, ppo=ppo, seed=config.seed,
                    out_dir=config.out_dir, eval_episodes=config.eval_episodes,
                    eval_interval=config.eval_interval)
    else:
        env, variant, heads = args.env or "push-lite", args.variant or MULTI_HEAD, args.heads
        base = dict(policy={}, ppo={})
    if args.iters is not None:
        base["ppo"]["iterations"] = args.iters
    if args.seed is not None:
        base["seed"] = args.seed
    if args.out is not None:
        base["out_dir"] = args.out
    base.setdefault("out_dir", f"runs/{env}-{variant}-seed{base.get('seed', 0)}")
    return RunConfig.for_env(env, variant, heads, **base)


def cmd_train(args) -> int:
    config = _run_config(args)
    result = run_training(config)
    r = result.final
    print(f"{config.out_dir}: return {r.mean_return:.3f} ± {r.return_std:.3f}, success {r.success_rate:.2f}")
    return 0


def cmd_eval(args) -> int:
    env = args.env or load_config_from_checkpoint(args.checkpoint)
    report = evaluate(args.checkpoint, env, args.episodes, args.seed or 0)
    print(f"{env}: return {report.mean_return:.3f} ± {report.return_std:.3f}, "
          f"success {report.success_rate:.2f} over {report.episodes} episodes")
    return 0


def load_config_from_checkpoint(path) -> str:
    return load_checkpoint(path)[2].env


def cmd_traj(args) -> int:
    env = args.env or load_config_from_checkpoint(args.checkpoint)
    out = args.out or "trajectory.jsonl"
    records = dump_trajectory(args.checkpoint, env, args.seed or 0, out)
    print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_compare(args) -> int:
    base = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        base = dataclasses.replace(base, seed=args.seed)
    envs = _split(args.env) if args.env else [base.env]
    variants = _split(args.variant) if args.variant else list(VARIANTS)
    table = compare(envs, variants, args.seeds, base, out_dir=args.out or "runs/compare",
                    heads=args.heads, iterations=args.iters, workers=args.workers)
    sys.stdout.write(table.format())
    return 0


def cmd_plot(args) -> int:
    out = plot_curves(args.csv, args.out or "curves.svg", title=args.title)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chronoskill", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, env_help="environment name", variant=True):
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--env", help=env_help)
        if variant:
            p.add_argument("--variant", help=f"one of {', '.join(VARIANTS)}")
            p.add_argument("--heads", type=int, help="number of policy heads (multi-head only)")
            p.add_argument("--iters", type=int, help="training iterations")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output path")

    p = sub.add_parser("train", help="train one agent")
    common(p, env_help=f"one of {', '.join(ENV_NAMES)}")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint with mean actions")
    p.add_argument("checkpoint")
    p.add_argument("--env")
    p.add_argument("--seed", type=int, help="first episode seed")
    p.add_argument("--episodes", type=int, default=50)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train every env x variant x seed cell")
    common(p, env_help="comma-separated environments")
    p.add_argument("--seeds", type=int, default=5, help="seeds per cell")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("traj", help="dump one deterministic episode")
    p.add_argument("checkpoint")
    p.add_argument("--env")
    p.add_argument("--seed", type=int, help="episode seed")
    p.add_argument("--out", help="output file (default trajectory.jsonl)")
    p.set_defaults(func=cmd_traj)

    p = sub.add_parser("plot", help="plot metric CSVs as SVG learning curves")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", help="output SVG (default curves.svg)")
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ChronoskillError, ValueError, OSError) as exc:
        print(f"chronoskill {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
