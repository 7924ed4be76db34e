"""Staged pipeline: pretrain -> attack -> defense -> cross-eval -> export.

Artifacts for a run live under ``out_dir``::

    config.json                 resolved configuration
    summary.json                per-seed and aggregate results
    seed_<s>/victim.ckpt        pretrained victim (+ .json metadata)
    seed_<s>/attacker.ckpt      attacker trained with ``run.method``
    seed_<s>/defended.ckpt      victim hardened against that attacker
    seed_<s>/*_metrics.csv      per-iteration training metrics
    seed_<s>/cross_eval.csv     non-crash matrix cells
    seed_<s>/actions/           victim action export and PCA projection

Every stage derives its random stream from ``(seed, stage)`` so any stage can
be rerun alone and still reproduce the full-pipeline artifacts.
"""

import csv
from dataclasses import replace
import json
import logging
import math
from pathlib import Path

import numpy as np

from advtrain import nn
from advtrain.baselines import AttackMethod, build_attacker, mc_controller
from advtrain.controllers import PolicyController
from advtrain.errors import AdvTrainError, ConfigError, PreconditionError, StageError
from advtrain.harness.config import STAGES, RunConfig, load_config
from advtrain.harness.evaluate import attacker_controller, cross_evaluate, evaluate
from advtrain.harness.export import export_actions
from advtrain.harness.harden import harden_victim
from advtrain.harness.metrics import category_counts, crash_rate
from advtrain.harness.pretrain import PretrainConfig, goal_rate, pretrain_victim
from advtrain.policy import GaussianPolicy
from advtrain.sim import get_scenario
from advtrain.trainer.attack import METRIC_FIELDS, train_attack
from advtrain.trainer.defense import DEFENSE_METRIC_FIELDS

log = logging.getLogger(__name__)

PRETRAIN_FIELDS = DEFENSE_METRIC_FIELDS + ("eval_goal_rate",)
DEFENSE_FIELDS = DEFENSE_METRIC_FIELDS + ("val_non_crash", "val_goal_rate")
CROSS_EVAL_FIELDS = ("seed", "train_method", "eval_method", "non_crash_rate", "std")
_STAGE_KEYS = {name: i for i, name in enumerate(STAGES)}


def stage_rng(seed, stage):
    return np.random.default_rng([int(seed), _STAGE_KEYS[stage]])


def write_csv(path, fieldnames, rows):
    """Schema-stable CSV; floats written with ``repr`` so reruns compare bit-exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(fieldnames)
        for row in rows:
            w.writerow([_cell(row.get(k, "")) for k in fieldnames])


def _cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def save_policy(policy, path, metadata):
    nn.save(policy.trunk, path, {"role": policy.role, **metadata})


def load_policy(path, role=None):
    meta = nn.load_metadata(path)
    return GaussianPolicy(nn.load(path), role or meta.get("role", "victim"))


class Pipeline:
    """One configured run. Stage methods are idempotent per ``(config, seed)``."""

    def __init__(self, cfg: RunConfig, out_dir=None):
        self.cfg = cfg
        self.out = Path(out_dir or cfg.run.out_dir)
        self.scenario = get_scenario(cfg.run.scenario)
        self.hash = cfg.digest()

    def seed_dir(self, seed):
        return self.out / f"seed_{seed}"

    def _victim_path(self, seed):
        if self.cfg.run.victim_checkpoint:
            return Path(self.cfg.run.victim_checkpoint)
        return self.seed_dir(seed) / "victim.ckpt"

    def _attacker_path(self, seed):
        if self.cfg.run.attacker_checkpoint:
            return Path(self.cfg.run.attacker_checkpoint)
        return self.seed_dir(seed) / "attacker.ckpt"

    def _require(self, path, stage, what):
        if not Path(path).exists():
            raise PreconditionError(f"stage {stage!r} needs the {what} checkpoint {path}; run the earlier stage first")
        return load_policy(path)

    def _meta(self, seed, stage):
        return {"scenario": self.scenario.id, "seed": int(seed), "stage": stage, "config_hash": self.hash}

    # ---------------------------------------------------------------- stages

    def pretrain(self, seed):
        c = self.cfg
        p = c.pretrain
        pcfg = PretrainConfig(
            ppo=replace(c.ppo, rollout_steps=p.rollout_steps),
            max_iterations=p.max_iterations, eval_episodes=p.eval_episodes,
            target_goal_rate=p.target_goal_rate, min_goal_rate=p.min_goal_rate,
            shaping=c.shaping, clone_steps=p.clone_steps, clone_rounds=p.clone_rounds,
        )
        res = pretrain_victim(self.scenario, pcfg, stage_rng(seed, "pretrain"), eval_seed=seed, weights=c.reward)
        d = self.seed_dir(seed)
        write_csv(d / "pretrain_metrics.csv", PRETRAIN_FIELDS, res.metrics)
        meta = {**self._meta(seed, "pretrain"), "goal_rate": res.goal_rate, "crash_rate": res.crash_rate,
                "iteration": res.iteration}
        save_policy(res.policy, d / "victim.ckpt", meta)
        return {"goal_rate": res.goal_rate, "crash_rate": res.crash_rate, "iteration": res.iteration}

    def attack(self, seed):
        c = self.cfg
        victim = self._require(self._victim_path(seed), "attack", "victim")
        method = c.method
        d = self.seed_dir(seed)
        if not method.learned:
            # MC has nothing to train; report its crash rate over the same budget
            outs, _ = evaluate(self.scenario, mc_controller(self.scenario), victim, c.eval.window, seed)
            return {"method": method.value, "crash_rate": crash_rate(outs)}
        a = c.attack
        res = train_attack(
            victim, self.scenario, build_attacker(method, c.ppo), stage_rng(seed, "attack"),
            n_iterations=a.n_iterations, episode_budget=a.episode_budget, weights=c.reward,
            keep_last_episodes=c.eval.window, early_stop=a.early_stop, value_warmup=a.value_warmup,
        )
        write_csv(d / "attack_metrics.csv", METRIC_FIELDS, res.metrics)
        final = res.metrics[-1]["crash_rate"] if res.metrics else 0.0
        meta = {**self._meta(seed, "attack"), "method": method.value, "final_crash_rate": final,
                "episodes": res.metrics[-1]["episodes"] if res.metrics else 0}
        save_policy(res.policy, d / "attacker.ckpt", meta)
        last = res.outcomes[-c.eval.window :]
        return {"method": method.value, "crash_rate": final, "categories": category_counts(last),
                "converged": res.converged}

    def defense(self, seed):
        c = self.cfg
        victim = self._require(self._victim_path(seed), "defense", "victim")
        method = c.method
        if method.learned:
            attacker = PolicyController(self._require(self._attacker_path(seed), "defense", "attacker"), stochastic=True)
        else:
            attacker = mc_controller(self.scenario)
        res = harden_victim(attacker, victim, self.scenario, c.ppo, stage_rng(seed, "defense"), c.defense,
                            seed, c.reward, c.shaping)
        d = self.seed_dir(seed)
        write_csv(d / "defense_metrics.csv", DEFENSE_FIELDS, res.metrics)
        final = res.metrics[-1] if res.metrics else {"crash_rate": 0.0, "goal_rate": 0.0}
        meta = {**self._meta(seed, "defense"), "method": method.value, "selected_iteration": res.iteration,
                "final_crash_rate": final["crash_rate"], "final_goal_rate": final["goal_rate"]}
        save_policy(res.policy, d / "defended.ckpt", meta)
        return {"crash_rate": final["crash_rate"], "goal_rate": final["goal_rate"], "selected_iteration": res.iteration,
                "val_non_crash": res.non_crash, "val_goal_rate": res.goal_rate}

    def cross_eval(self, seed):
        c = self.cfg
        d = self.seed_dir(seed)
        victims = {"pretrained": self._require(self._victim_path(seed), "cross-eval", "victim")}
        defended = d / "defended.ckpt"
        if defended.exists():
            victims[f"defended-{c.method.value}"] = load_policy(defended)
        attackers = {"none": None, "mc": None}
        if c.method.learned:
            attackers[c.method.value] = self._require(self._attacker_path(seed), "cross-eval", "attacker")
        cells = cross_evaluate(self.scenario, victims, attackers, c.eval.episodes, c.eval.seeds)
        rows = [{"seed": seed, "train_method": x.train_method, "eval_method": x.eval_method,
                 "non_crash_rate": x.non_crash_rate, "std": x.std} for x in cells]
        write_csv(d / "cross_eval.csv", CROSS_EVAL_FIELDS, rows)
        return {f"{x.train_method}|{x.eval_method}": x.non_crash_rate for x in cells}

    def export(self, seed):
        c = self.cfg
        victim = self._require(self._victim_path(seed), "export", "victim")
        method = c.method
        policy = self._require(self._attacker_path(seed), "export", "attacker") if method.learned else None
        ctl = attacker_controller(method.value, self.scenario, policy)
        outs, acts = evaluate(self.scenario, ctl, victim, c.eval.export_episodes, seed, record_actions=True)
        summary = export_actions({(method.value, seed): acts}, self.seed_dir(seed) / "actions")
        return {"hull_area": summary["hull_area"][f"{method.value}/{seed}"],
                "explained_variance_ratio": summary["explained_variance_ratio"], "goal_rate": goal_rate(outs)}

    def run_stage(self, stage, seed):
        fn = {"pretrain": self.pretrain, "attack": self.attack, "defense": self.defense,
              "cross-eval": self.cross_eval, "export": self.export}[stage]
        log.info("stage %s, seed %s", stage, seed)
        try:
            return fn(seed)
        except (ConfigError, PreconditionError):
            raise
        except AdvTrainError as exc:
            raise StageError(stage, self.hash, exc) from exc
        except (ArithmeticError, ValueError, OSError) as exc:
            raise StageError(stage, self.hash, exc) from exc

    def run(self, stages=None, seeds=None):
        stages = tuple(stages or self.cfg.run.stages)
        seeds = tuple(self.cfg.run.seeds if seeds is None else seeds)
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "config.json").write_text(json.dumps(self.cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        per_seed = {}
        for seed in seeds:
            per_seed[str(seed)] = {stage: self.run_stage(stage, seed) for stage in STAGES if stage in stages}
        summary = {
            "config_hash": self.hash,
            "scenario": self.scenario.id,
            "method": self.cfg.method.value,
            "stages": list(stages),
            "seeds": per_seed,
            "aggregate": aggregate(per_seed),
        }
        (self.out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return summary


def aggregate(per_seed):
    """Mean and population std over seeds of every scalar stage result."""
    values = {}
    for stages in per_seed.values():
        for stage, result in stages.items():
            for key, v in result.items():
                if isinstance(v, (int, float)) and not isinstance(v, bool):
                    values.setdefault(f"{stage}.{key}", []).append(float(v))
    return {k: {"mean": float(np.mean(v)), "std": float(np.std(v)), "n": len(v)} for k, v in sorted(values.items())}


def run_experiment(config, out_dir=None, stages=None, seeds=None):
    """Run a configuration (a :class:`RunConfig` or TOML path); returns the summary dict."""
    cfg = config if isinstance(config, RunConfig) else load_config(config)
    return Pipeline(cfg, out_dir).run(stages, seeds)
