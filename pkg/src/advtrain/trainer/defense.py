"""Adversarial defense stage: harden the victim against a frozen attacker.

Mirrors the attack stage with the roles swapped. The victim maximizes the
clipped surrogate of its own true-reward advantage minus the clipped
surrogate of an advantage computed from an attacker-value approximation
(same shape as the VAN, fitted on the attacker's sparse reward from the
victim's observations). There is no curiosity channel here.
"""

from collections import deque
from dataclasses import dataclass, field
import time

import numpy as np

from advtrain import nn
from advtrain.controllers import PolicyController
from advtrain.curiosity import FEATURE_DIM, RewardWeights, make_van
from advtrain.errors import UsageError
from advtrain.policy import GaussianPolicy, make_value
from advtrain.sim.world import OBS_DIM, Shaping, Terminal
from advtrain.trainer.advantages import gae_advantage, normalize, td_advantage
from advtrain.trainer.attack import CrashWindow, ConvergenceMonitor
from advtrain.trainer.config import PpoConfig
from advtrain.trainer.ppo import PpoStats, ppo_update, td_epochs
from advtrain.trainer.rollout import collect_rollouts

DEFENSE_METRIC_FIELDS = (
    "iteration",
    "episodes",
    "crash_rate",
    "goal_rate",
    "policy_loss",
    "value_loss",
    "attacker_value_loss",
    "wall_time_ms",
)


@dataclass
class DefenseResult:
    policy: GaussianPolicy
    v_victim: nn.MlpNet
    attacker_value: nn.MlpNet = None
    metrics: list = field(default_factory=list)
    outcomes: list = field(default_factory=list)
    converged: bool = False


def make_attacker_value(obs_dim, rng):
    """Attacker-value approximation over victim observations; VAN-shaped."""
    return make_van(obs_dim, rng, FEATURE_DIM, role="attacker_value").net


def victim_batch(buf, with_continuation=True):
    """Time-ordered victim rows ``(obs, next_obs, presquash, log_prob, reward,
    done, is_main)``.

    Each continuation follows the attacker exit that started it. That exit
    then bootstraps into the continuation instead of ending, and drops its
    tail. ``is_main`` marks rows that come from the two-vehicle episode.
    """
    cont = buf.continuation
    n = len(buf)
    if not with_continuation or cont is None or len(cont) == 0:
        return (buf.obs_v, buf.next_obs_v, buf.pre_v, buf.logp_v, buf.victim_targets(true_reward=True),
                buf.done, np.ones(n, dtype=bool))
    r = buf.r_victim.copy()
    nxt = buf.next_obs_v.copy()
    done = buf.done.copy()
    first = np.flatnonzero(np.r_[True, cont.source[1:] != cont.source[:-1]])
    src = cont.source[first]
    nxt[src] = cont.obs[first]
    done[src] = 0.0
    no_cont = np.setdiff1d(np.flatnonzero(buf.tail_victim), src)
    r[no_cont] += buf.tail_victim[no_cont]
    # main row i sorts at (i, 0); continuation rows at (source, 1..k)
    key_main = np.arange(n) * 2.0
    key_cont = cont.source * 2.0 + 1.0
    order = np.argsort(np.r_[key_main, key_cont], kind="stable")
    cat = lambda a, b: np.concatenate([a, b])[order]
    is_main = cat(np.ones(n, dtype=bool), np.zeros(len(cont), dtype=bool))
    return (cat(buf.obs_v, cont.obs), cat(nxt, cont.next_obs), cat(buf.pre_v, cont.pre),
            cat(buf.logp_v, cont.logp), cat(r, cont.reward), cat(done, cont.done), is_main)


def train_defense(
    attacker,
    victim,
    scenario,
    cfg,
    rng,
    n_iterations=50,
    episode_budget=None,
    weights=RewardWeights(),
    use_attacker_term=True,
    shaping=Shaping(),
    early_stop=False,
    wall_clock=False,
    on_iteration=None,
    stop_check=None,
    log_std_init=None,
    value_warmup=0,
    train_continuation=True,
    gae_lambda=0.95,
):
    """Train a copy of ``victim`` against the frozen ``attacker`` controller.

    ``attacker`` is any controller (a :class:`PolicyController` for a learned
    attacker or a route follower for MC traffic). The input victim is left
    untouched; the hardened policy is in the returned result.
    ``stop_check(policy, row)`` may end training early by returning True.
    ``log_std_init`` resets the copy's exploration noise before training.
    The first ``value_warmup`` iterations fit the value networks only, so a
    competent starting policy is not steered by an untrained critic.

    With ``train_continuation`` the victim also learns from the rest of its
    route after the attacker leaves the road (opponent advantage zero there);
    otherwise those steps only enter through the continuation tail.
    The victim's own advantage is a GAE with ``gae_lambda``; 0 gives the
    one-step TD advantage of the attack stage.
    """
    if not isinstance(cfg, PpoConfig):
        raise UsageError("train_defense expects a PpoConfig")
    if not isinstance(victim, GaussianPolicy):
        raise UsageError("victim must be a GaussianPolicy")
    frozen = getattr(attacker, "policy", None)
    frozen_sum = nn.checksum(frozen.trunk) if frozen is not None else None

    policy = victim.copy()
    if log_std_init is not None:
        policy.set_log_std(log_std_init)
    v_victim = make_value(OBS_DIM, rng, role="victim_defense").net
    att_value = make_attacker_value(OBS_DIM, rng) if use_attacker_term else None
    victim_ctl = PolicyController(policy, stochastic=True)
    window = CrashWindow(100)
    goals = deque(maxlen=100)
    monitor = ConvergenceMonitor()
    result = DefenseResult(policy, v_victim, att_value)
    episodes = 0
    for it in range(n_iterations):
        if episode_budget is not None and episodes >= episode_budget:
            break
        t0 = time.perf_counter()
        remaining = None if episode_budget is None else episode_budget - episodes
        buf = collect_rollouts(
            scenario, attacker, victim_ctl, cfg.rollout_steps, rng, weights,
            shaping=shaping,
            first_episode=episodes, max_episodes=remaining, gamma=cfg.gamma,
            record_continuation=train_continuation,
        )
        episodes += buf.n_episodes
        window.extend(buf.outcomes)
        goals.extend(o.terminal is Terminal.VICTIM_GOAL for o in buf.outcomes)
        result.outcomes.extend(buf.outcomes)

        obs, nxt = buf.obs_v, buf.next_obs_v
        a_opp = td_advantage(att_value, obs, buf.r_alpha, nxt, buf.done, cfg.gamma) if use_attacker_term else None
        if cfg.normalize_advantages and a_opp is not None:
            a_opp = normalize(a_opp)
        v_obs, v_nxt, v_pre, v_logp, r_own, v_done, is_main = victim_batch(buf, train_continuation)
        if a_opp is not None and not is_main.all():
            full = np.zeros(len(v_obs))
            full[is_main] = a_opp
            a_opp = full
        a_own = gae_advantage(v_victim, v_obs, r_own, v_nxt, v_done, cfg.gamma, gae_lambda)
        if cfg.normalize_advantages:
            a_own = normalize(a_own)
        if it >= value_warmup:
            stats = ppo_update(policy, v_obs, v_pre, v_logp, a_own, a_opp, cfg, rng)
        else:
            stats = PpoStats()
        v_loss = td_epochs(v_victim, v_obs, r_own, v_nxt, v_done, cfg.gamma, cfg.lr_value,
                           cfg.value_epochs, cfg.batch_size, rng)
        av_loss = [float("nan")]
        if use_attacker_term:
            av_loss = td_epochs(att_value, obs, buf.r_alpha, nxt, buf.done, cfg.gamma, cfg.lr_van,
                                cfg.value_epochs, cfg.batch_size, rng)
        if frozen is not None and nn.checksum(frozen.trunk) != frozen_sum:
            raise UsageError("attacker parameters changed during the defense stage")
        row = {
            "iteration": it,
            "episodes": episodes,
            "crash_rate": window.rate,
            "goal_rate": sum(goals) / len(goals) if goals else 0.0,
            "policy_loss": stats.policy_loss,
            "value_loss": float(np.mean(v_loss)) if v_loss else float("nan"),
            "attacker_value_loss": float(np.mean(av_loss)) if av_loss else float("nan"),
            "wall_time_ms": round((time.perf_counter() - t0) * 1e3, 3) if wall_clock else 0.0,
        }
        result.metrics.append(row)
        if on_iteration is not None:
            on_iteration(row)
        if stop_check is not None and stop_check(policy, row):
            result.converged = True
            break
        monitor.observe(episodes, window.rate)
        if early_stop and monitor.converged:
            result.converged = True
            break
    return result
