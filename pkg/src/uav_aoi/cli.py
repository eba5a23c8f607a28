"""Command-line entry point.

Subcommands: train, eval, sweep, oracle-compare, summarize. Config files
are JSON; an empty object reproduces the default (paper-scale) setup, and
any field can be overridden. See the README for the schema.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .agent import greedy_rollout, train
from .baselines import make_policy
from .env import rollout
from .experiments import (
    ExperimentSpec,
    build_episode_config,
    load_manifest_spec,
    load_spec,
    run,
    summarize,
)
from .network import load_network, save_network
from .oracle import optimal_rollout, policy_value, save_table, solve


def _load(args) -> ExperimentSpec:
    spec = load_spec(args.config) if args.config else ExperimentSpec()
    if getattr(args, "seed", None) is not None:
        spec = replace(spec, seed=args.seed)
    if getattr(args, "episodes", None) is not None:
        spec = replace(spec, train=replace(spec.train, episodes=args.episodes))
    return spec


def _single_config(spec: ExperimentSpec):
    """Episode config for non-sweep commands; mirrors the seed derivation of
    a sweep's first point and repetition, so eval sees the same placement."""
    master = np.random.SeedSequence(spec.seed)
    stream = master.spawn(1)[0].spawn(1)[0].spawn(1)[0]
    placement_ss, seed_ss = stream.spawn(2)
    rng = np.random.default_rng(placement_ss)
    seed = int(np.random.default_rng(seed_ss).integers(0, 2 ** 63))
    return build_episode_config(spec, spec.radius_cells, spec.sensor_count, rng, seed)


def _print_record(label: str, record) -> None:
    print(f"{label}: return={record.total_return:.4f} avg_aoi={record.avg_age:.4f} "
          f"kind={record.kind.value} steps={record.length}")


def cmd_train(args) -> int:
    spec = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _single_config(spec)
    net, log = train(config, spec.train)
    ckpt = out / "dqn.qnet"
    save_network(net, ckpt)
    with (out / "train_log.csv").open("w") as fh:
        fh.write("episode,steps,return,avg_aoi,terminal_kind,epsilon,learning_rate\n")
        for ep in log.episodes:
            fh.write(f"{ep.episode},{ep.steps},{ep.total_return},{ep.avg_age},"
                     f"{ep.kind.value},{ep.epsilon},{ep.learning_rate}\n")
    record = greedy_rollout(net, config)
    _print_record("greedy rollout", record)
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_eval(args) -> int:
    spec = _load(args)
    config = _single_config(spec)
    if args.policy == "dqn":
        if not args.checkpoint:
            print("eval of dqn requires --checkpoint", file=sys.stderr)
            return 2
        net = load_network(args.checkpoint)
        record = greedy_rollout(net, config)
    elif args.policy == "oracle":
        record = optimal_rollout(solve(config), config)
    else:
        record = rollout(make_policy(args.policy, config, seed=spec.seed,
                                     bcfg=spec.baseline), config)
    _print_record(args.policy, record)
    return 0


def cmd_sweep(args) -> int:
    if args.manifest:
        spec = load_manifest_spec(args.manifest)
    else:
        spec = _load(args)
    metrics = run(spec, args.out)
    print(f"metrics: {metrics}")
    for row in summarize(metrics, args.out):
        print(f"  policy={row.policy} sweep={row.sweep_value} "
              f"mean_aoi={row.mean_avg_aoi:.4f} mean_return={row.mean_return:.4f}")
    return 0


def cmd_oracle_compare(args) -> int:
    spec = _load(args)
    config = _single_config(spec)
    table = solve(config)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_table(table, out / "value_table.bin")
    record = optimal_rollout(table, config)
    print(f"oracle root value: {table.root_value:.6f}")
    _print_record("oracle rollout", record)
    for name in ("aoi_greedy", "distance_round", "random"):
        g, j = policy_value(make_policy(name, config, seed=spec.seed,
                                        bcfg=spec.baseline), config)
        gap = table.root_value - g
        print(f"{name}: return={g:.4f} avg_aoi={j:.4f} optimality_gap={gap:.4f}")
    return 0


def cmd_summarize(args) -> int:
    for row in summarize(args.metrics, args.out):
        print(f"policy={row.policy} sweep={row.sweep_value} episodes={row.episodes} "
              f"mean_aoi={row.mean_avg_aoi:.4f} mean_return={row.mean_return:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uav-aoi",
        description="UAV status-update collection: training, baselines, sweeps, "
                    "and exact-solver comparisons.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        if out_required:
            p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("train", help="train a DQN agent and save a checkpoint")
    common(p)
    p.add_argument("--episodes", type=int, default=None, help="training episode override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="roll out one policy on one config")
    common(p, out_required=False)
    p.add_argument("--policy", required=True,
                   choices=["dqn", "aoi_greedy", "distance_round", "random", "oracle"])
    p.add_argument("--checkpoint", type=Path, default=None, help="DQN checkpoint path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a full sweep and write metrics + manifest")
    common(p)
    p.add_argument("--episodes", type=int, default=None, help="training episode override")
    p.add_argument("--manifest", type=Path, default=None,
                   help="re-run from a previously written manifest.json")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-compare", help="exact solve and baseline comparison")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_oracle_compare)

    p = sub.add_parser("summarize", help="aggregate a metrics.csv into series files")
    p.add_argument("--metrics", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
