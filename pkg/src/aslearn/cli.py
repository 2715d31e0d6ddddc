"""Command line entry point: ``aslearn train|eval|aggregate|plot``."""

import argparse
import logging
import os
import sys

from .config import dump_config, load_config
from .envs.scenario import load_scenario
from .harness import Trainer, evaluate_policy
from .kvfile import dump_kv
from .metrics import plot_metrics, write_aggregate, write_metrics
from .nets import load_checkpoint


def _train(args):
    cfg = load_config(args.config)
    if args.desk:
        cfg = cfg.desk()
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)
    for seed in seeds:
        out = args.out if len(seeds) == 1 else os.path.join(args.out, f"seed{seed}")
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "config.txt"), "w", encoding="utf-8") as fh:
            fh.write(dump_config(cfg))
        state = os.path.join(out, "train_state.pkl")
        if args.resume and os.path.exists(state):
            trainer = Trainer.resume(cfg, out)
            print(f"seed {seed}: resuming at iteration {trainer.iteration}")
        else:
            trainer = Trainer(cfg, seed)
        result = trainer.run(out)
        summary = {"seed": str(seed), "iterations": str(result.iterations),
                   "final_return": repr(result.final_return),
                   "aborted_updates": str(result.aborted_updates)}
        with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8") as fh:
            fh.write(dump_kv(summary, "aslearn-summary", 1))
        print(f"seed {seed}: {result.iterations} iterations, final return {result.final_return:.4f}")
    return 0


def _eval(args):
    scenario = load_scenario(args.scenario)
    policy, _ = load_checkpoint(args.checkpoint)
    env = scenario.make_env()
    if policy.obs_dim != env.spec.obs_dim or policy.act_dim != env.spec.act_dim:
        print("checkpoint does not match the scenario's environment", file=sys.stderr)
        return 2
    ret = evaluate_policy(env, policy, scenario.eval_goals, args.episodes, args.seed)
    print(f"mean return over {args.episodes} episodes: {ret:.6f}")
    return 0


def _aggregate(args):
    records = write_aggregate(args.glob, args.out)
    if args.out is None:
        write_metrics(records, sys.stdout)
    return 0


def _plot(args):
    for path in plot_metrics(args.csv, args.out):
        print(path)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="aslearn", description="PPO with symmetry losses")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one or more seeds")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None, help="overrides the config's seed list")
    t.add_argument("--out", required=True)
    t.add_argument("--desk", action="store_true", help="2e5 steps and [64, 64] hidden layers")
    t.add_argument("--resume", action="store_true", help="continue from a saved training state")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint deterministically")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scenario", required=True, help="scenario file or builtin:NAME")
    e.add_argument("--episodes", type=int, default=16)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=_eval)

    a = sub.add_parser("aggregate", help="average metrics CSV files over seeds")
    a.add_argument("--glob", required=True)
    a.add_argument("--out", default=None)
    a.set_defaults(func=_aggregate)

    pl = sub.add_parser("plot", help="line charts of the logged metrics")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--out", default=None, help="output directory (default: next to the CSV)")
    pl.set_defaults(func=_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
