"""Victim pretraining.

Two phases: behaviour cloning of a pure-pursuit driver (a warm start that
stands in for training on recorded driving data), then plain PPO against
randomly spawned route-following traffic until the goal rate target is met.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from advtrain import nn
from advtrain.baselines import mc_controller
from advtrain.controllers import PolicyController, RandomTraffic, RouteFollower
from advtrain.curiosity import RewardWeights
from advtrain.errors import PretrainingError
from advtrain.harness.evaluate import evaluate
from advtrain.policy import make_policy
from advtrain.sim.world import ACTION_DIM, OBS_DIM, Action, Shaping, Terminal, observe, reset, step
from advtrain.trainer.config import PpoConfig
from advtrain.trainer.defense import train_defense

log = logging.getLogger(__name__)


@dataclass
class PretrainConfig:
    ppo: PpoConfig = field(default_factory=lambda: PpoConfig(rollout_steps=1000))
    max_iterations: int = 60
    eval_every: int = 2
    eval_episodes: int = 100
    target_goal_rate: float = 0.9
    min_goal_rate: float = 0.5
    log_std_init: float = -0.5
    shaping: Shaping = field(default_factory=Shaping)
    value_warmup: int = 4
    min_ppo_iterations: int = 4
    expert_speed: float = 10.0
    clone_steps: int = 5000
    clone_epochs: int = 10
    clone_lr: float = 1e-3
    clone_rounds: int = 4


@dataclass
class PretrainResult:
    policy: object
    goal_rate: float
    crash_rate: float
    iteration: int  # PPO iteration of the kept snapshot; -1 = cloned policy
    metrics: list


def goal_rate(outcomes):
    return sum(o.terminal is Terminal.VICTIM_GOAL for o in outcomes) / len(outcomes)


def behavior_clone(policy, obs, actions, epochs, lr, batch_size, rng):
    """Fit the pre-squash mean to ``atanh`` of the demonstrated actions (MSE).

    Returns the per-epoch mean loss.
    """
    a = policy.action_dim
    target = np.arctanh(np.clip(actions, -0.95, 0.95))
    n = len(obs)
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            out, tape = nn.forward(policy.trunk, obs[idx])
            diff = out[:, :a] - target[idx]
            losses.append(float((diff * diff).sum(axis=1).mean()))
            g = np.zeros_like(out)
            g[:, :a] = 2.0 * diff / len(idx)
            nn.adam_step(policy.trunk, nn.backward(policy.trunk, tape, g), lr)
            policy.pin_log_std()
        history.append(float(np.mean(losses)))
    return history


def demonstrations(scenario, n_steps, rng, expert_speed, driver=None):
    """Victim observations labelled with route-follower actions, randomised traffic present.

    With ``driver`` given, the driver's own mean actions generate the states
    (dataset aggregation) while the labels still come from the expert.
    """
    expert = RouteFollower(target_speed=expert_speed)
    traffic = RandomTraffic()
    obs, labels = [], []
    while len(obs) < n_steps:
        w = reset(scenario, "sample", rng)
        while w.terminal is Terminal.RUNNING:
            o = observe(w, "victim")
            label = expert.command(w.victim, scenario.victim_route, scenario.vehicle)
            obs.append(o)
            labels.append(label)
            av = label if driver is None else driver.mean_action(o)
            da = traffic.act(w, "attacker", rng)
            w = step(w, Action(float(av[0]), float(av[1])), Action(float(da.action[0]), float(da.action[1])))
    return np.asarray(obs), np.asarray(labels)


def pretrain_victim(scenario, cfg, rng, eval_seed=0, weights=RewardWeights()):
    """Clone, then fine-tune until the deterministic goal rate over
    ``eval_episodes`` reaches the target or the budget runs out.

    The best evaluated snapshot is returned. Raises :class:`PretrainingError`
    if its goal rate is below ``min_goal_rate``.
    """
    policy = make_policy(OBS_DIM, ACTION_DIM, rng, log_std_init=cfg.log_std_init, role="victim")
    traffic = mc_controller(scenario)
    if cfg.clone_steps:
        obs, acts = demonstrations(scenario, cfg.clone_steps, rng, cfg.expert_speed)
        for r in range(cfg.clone_rounds):
            if r:
                o2, a2 = demonstrations(scenario, cfg.clone_steps, rng, cfg.expert_speed, driver=policy)
                obs, acts = np.concatenate([obs, o2]), np.concatenate([acts, a2])
            behavior_clone(policy, obs, acts, cfg.clone_epochs, cfg.clone_lr, cfg.ppo.batch_size, rng)
        policy.trunk.reset_optimizer()
    best = {"goal": -1.0, "crash": 1.0, "policy": policy.copy(), "iteration": -1}

    def score(p, it):
        outs, _ = evaluate(scenario, traffic, p, cfg.eval_episodes, eval_seed)
        g = goal_rate(outs)
        if g >= best["goal"]:
            best.update(goal=g, crash=sum(o.crashed for o in outs) / len(outs), policy=p.copy(), iteration=it)
        log.info("pretrain iteration %d: goal rate %.2f", it, g)
        return g

    score(policy, -1)

    def check(p, row):
        done_ppo = row["iteration"] + 1 - cfg.value_warmup
        if done_ppo < cfg.min_ppo_iterations or done_ppo % cfg.eval_every:
            return False
        row["eval_goal_rate"] = score(p, row["iteration"])
        return row["eval_goal_rate"] >= cfg.target_goal_rate

    res = train_defense(
        traffic, policy, scenario, cfg.ppo, rng,
        n_iterations=cfg.max_iterations, weights=weights, use_attacker_term=False, stop_check=check,
        shaping=cfg.shaping, value_warmup=cfg.value_warmup,
    )
    if best["goal"] < cfg.min_goal_rate:
        raise PretrainingError(
            f"victim pretraining on {scenario.id} reached only {best['goal']:.2f} goal rate "
            f"after {len(res.metrics)} iterations"
        )
    return PretrainResult(best["policy"], best["goal"], best["crash"], best["iteration"], res.metrics)
