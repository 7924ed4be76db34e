"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

import argparse
from dataclasses import replace
import json
import logging
import sys

from advtrain.errors import AdvTrainError, ConfigError
from advtrain.harness.config import RunConfig, load_config
from advtrain.harness.evaluate import attacker_controller, evaluate
from advtrain.harness.experiment import Pipeline, load_policy
from advtrain.harness.metrics import category_counts, crash_rate

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

_STAGE_OF = {
    "pretrain-victim": "pretrain",
    "train-attack": "attack",
    "train-defense": "defense",
    "cross-eval": "cross-eval",
    "export-actions": "export",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="run a single seed instead of run.seeds")
    common.add_argument("--out", help="output directory (overrides run.out_dir)")
    common.add_argument("--method", help="mc, ppo, ppo-va or proposed")
    common.add_argument("--scenario", type=str.lower, choices=("nsjcr", "sjrt", "sjlt"))
    common.add_argument("--victim", help="victim checkpoint path")
    common.add_argument("--attacker", help="attacker checkpoint path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="advtrain", description="Adversarial attack and defense training for a two-vehicle simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _STAGE_OF:
        sub.add_parser(name, parents=[common], help=f"run the {_STAGE_OF[name]} stage")
    ev = sub.add_parser("evaluate", parents=[common], help="crash rate of the victim against one attacker")
    ev.add_argument("--episodes", type=int, default=None)
    sub.add_parser("run", parents=[common], help="run every stage listed in the config")
    return parser


def resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    run = cfg.run
    updates = {}
    if args.seed is not None:
        updates["seeds"] = (args.seed,)
    if args.out:
        updates["out_dir"] = args.out
    if args.method:
        updates["method"] = args.method
    if args.scenario:
        updates["scenario"] = args.scenario
    if args.victim:
        updates["victim_checkpoint"] = args.victim
    if args.attacker:
        updates["attacker_checkpoint"] = args.attacker
    return replace(cfg, run=replace(run, **updates)) if updates else cfg


def _evaluate(pipe, args):
    cfg = pipe.cfg
    episodes = args.episodes or cfg.eval.episodes
    out = {}
    for seed in cfg.run.seeds:
        victim = pipe._require(pipe._victim_path(seed), "evaluate", "victim")
        policy = pipe._require(pipe._attacker_path(seed), "evaluate", "attacker") if cfg.method.learned else None
        ctl = attacker_controller(cfg.method.value, pipe.scenario, policy)
        outs, _ = evaluate(pipe.scenario, ctl, victim, episodes, seed)
        out[str(seed)] = {"crash_rate": crash_rate(outs), "categories": category_counts(outs)}
    return out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        pipe = Pipeline(cfg)
        if args.command == "evaluate":
            result = _evaluate(pipe, args)
        elif args.command == "run":
            result = pipe.run()
        else:
            result = pipe.run(stages=(_STAGE_OF[args.command],))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AdvTrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    json.dump(result, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
