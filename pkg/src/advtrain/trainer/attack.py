"""Adversarial attack stage: train the attacker against a frozen victim."""

from collections import deque
from dataclasses import dataclass, field
import time

import numpy as np

from advtrain import nn
from advtrain.controllers import PolicyController
from advtrain.curiosity import RewardWeights, make_rnd, make_van, rnd_update
from advtrain.errors import ConfigError, UsageError
from advtrain.policy import GaussianPolicy, make_policy, make_value
from advtrain.sim.world import ACTION_DIM, OBS_DIM
from advtrain.trainer.advantages import compute_advantages, fill_intrinsic
from advtrain.trainer.config import PpoConfig
from advtrain.trainer.ppo import PpoStats, ppo_update, td_epochs
from advtrain.trainer.rollout import collect_rollouts

METRIC_FIELDS = (
    "iteration",
    "episodes",
    "crash_rate",
    "mean_r_ins_raw",
    "policy_loss",
    "van_loss",
    "rnd_loss",
    "wall_time_ms",
)

LEARNED_METHODS = ("PPO", "PPO_VA", "PROPOSED")


@dataclass
class AttackConfig:
    """Which loss terms the attacker update uses, plus PPO settings."""

    method: str = "PROPOSED"
    ppo: PpoConfig = field(default_factory=PpoConfig)
    use_victim_term: bool = True
    use_curiosity: bool = True

    def __post_init__(self):
        if self.method not in LEARNED_METHODS:
            raise ConfigError(f"attack method must be one of {LEARNED_METHODS}, got {self.method!r}")
        if self.use_curiosity and not self.use_victim_term:
            raise ConfigError("curiosity features come from the VAN; it cannot be enabled without it")
        if not self.use_curiosity and self.ppo.lambda_curiosity != 0.0:
            raise ConfigError("lambda_curiosity must be 0 when curiosity is disabled")

    def active_terms(self):
        """Loss terms present in the attacker's update graph."""
        terms = {"attacker_advantage"}
        if self.use_victim_term:
            terms |= {"victim_advantage", "van_td"}
        if self.use_curiosity:
            terms |= {"intrinsic_advantage", "intrinsic_value_td", "rnd_distillation"}
        return frozenset(terms)


class CrashWindow:
    """Rolling crash rate over the most recent ``size`` episodes."""

    def __init__(self, size=100):
        self.window = deque(maxlen=size)

    def extend(self, outcomes):
        self.window.extend(o.crashed for o in outcomes)

    @property
    def rate(self):
        return sum(self.window) / len(self.window) if self.window else 0.0


class ConvergenceMonitor:
    """Converged once the crash rate stays within ``tol`` over ``patience``
    consecutive evaluation windows (evaluated every ``every`` episodes)."""

    def __init__(self, tol=0.02, patience=10, every=10, min_episodes=100):
        self.tol, self.patience, self.every, self.min_episodes = tol, patience, every, min_episodes
        self.history = []
        self._next = min_episodes

    def observe(self, episodes, rate):
        while episodes >= self._next:
            self.history.append(rate)
            self._next += self.every

    @property
    def converged(self):
        h = self.history[-self.patience :]
        return len(h) == self.patience and max(h) - min(h) < self.tol


@dataclass
class AttackResult:
    policy: GaussianPolicy
    v_alpha: nn.MlpNet
    van: object = None
    v_ins: nn.MlpNet = None
    rnd: object = None
    metrics: list = field(default_factory=list)
    outcomes: list = field(default_factory=list)
    victim_actions: list = field(default_factory=list)
    converged: bool = False


def _victim_policy(victim):
    if isinstance(victim, GaussianPolicy):
        return victim
    if isinstance(victim, nn.MlpNet):
        return GaussianPolicy(victim, "victim")
    raise UsageError("victim must be a GaussianPolicy or a loaded checkpoint network")


def train_attack(
    victim,
    scenario,
    cfg,
    rng,
    n_iterations=100,
    episode_budget=None,
    weights=RewardWeights(),
    keep_last_episodes=100,
    early_stop=False,
    wall_clock=False,
    on_iteration=None,
    value_warmup=0,
):
    """Alternate rollout collection and updates until the iteration or
    episode budget runs out.

    The victim is frozen (deterministic mean actions; parameters are never
    written). Returns an :class:`AttackResult`; ``metrics`` holds one dict per
    iteration with the :data:`METRIC_FIELDS` keys. The first ``value_warmup``
    iterations skip the policy step and only fit the critics.
    """
    victim = _victim_policy(victim)
    frozen_sum = nn.checksum(victim.trunk)
    p = cfg.ppo
    policy = make_policy(OBS_DIM, ACTION_DIM, rng, log_std_init=p.log_std_init, role="attacker")
    v_alpha = make_value(OBS_DIM, rng, role="attacker_extrinsic").net
    van = make_van(OBS_DIM, rng) if cfg.use_victim_term else None
    v_ins = make_value(OBS_DIM, rng, role="attacker_intrinsic").net if cfg.use_curiosity else None
    rnd = make_rnd(rng=rng) if cfg.use_curiosity else None

    attacker_ctl = PolicyController(policy, stochastic=True)
    victim_ctl = PolicyController(victim, stochastic=False)
    window = CrashWindow(100)
    monitor = ConvergenceMonitor()
    result = AttackResult(policy, v_alpha, van, v_ins, rnd)
    kept = deque(maxlen=keep_last_episodes)
    episodes = 0
    for it in range(n_iterations):
        if episode_budget is not None and episodes >= episode_budget:
            break
        t0 = time.perf_counter()
        remaining = None if episode_budget is None else episode_budget - episodes
        buf = collect_rollouts(
            scenario, attacker_ctl, victim_ctl, p.rollout_steps, rng, weights,
            first_episode=episodes, max_episodes=remaining, gamma=p.gamma,
        )
        episodes += buf.n_episodes
        window.extend(buf.outcomes)
        result.outcomes.extend(buf.outcomes)
        for ep in np.unique(buf.episode):
            kept.append(buf.act_v[buf.episode == ep])

        feats = None
        if cfg.use_curiosity:
            # VAN is only updated after this call, so it is its own snapshot here
            feats = fill_intrinsic(buf, van, rnd)
        adv = compute_advantages(
            buf, v_alpha, van.net if van else None, v_ins, p.gamma,
            lam=p.lambda_curiosity if cfg.use_curiosity else 0.0,
            normalize_channels=p.normalize_advantages,
            ins_reward_source=p.ins_reward_source,
        )
        if it >= value_warmup:
            stats = ppo_attack_update(policy, buf, adv, p, rng, use_victim_term=cfg.use_victim_term)
        else:
            stats = PpoStats()
        losses = value_updates(buf, v_alpha, v_ins, van, p, rng)
        rnd_loss = float("nan")
        if cfg.use_curiosity:
            rnd_loss = float(np.mean(rnd_epochs(rnd, feats, p, rng)))
        if nn.checksum(victim.trunk) != frozen_sum:
            raise UsageError("victim parameters changed during the attack stage")
        row = {
            "iteration": it,
            "episodes": episodes,
            "crash_rate": window.rate,
            "mean_r_ins_raw": float(buf.r_ins_raw.mean()) if cfg.use_curiosity else 0.0,
            "policy_loss": stats.policy_loss,
            "van_loss": losses.get("van", float("nan")),
            "rnd_loss": rnd_loss,
            "wall_time_ms": round((time.perf_counter() - t0) * 1e3, 3) if wall_clock else 0.0,
        }
        result.metrics.append(row)
        if on_iteration is not None:
            on_iteration(row)
        monitor.observe(episodes, window.rate)
        if early_stop and monitor.converged:
            result.converged = True
            break
    result.victim_actions = list(kept)
    return result


def ppo_attack_update(policy, buffer, advantages, cfg, rng, use_victim_term=True):
    """Dual-advantage clipped update of the attacker on ``buffer``."""
    opp = advantages.victim if use_victim_term else None
    return ppo_update(policy, buffer.obs_a, buffer.pre_a, buffer.logp_a, advantages.fused, opp, cfg, rng)


def value_updates(buf, v_alpha, v_ins, van, cfg, rng, obs_key="obs_a"):
    """Semi-gradient TD passes for each value network on its own reward channel.

    Returns the mean pre-step loss per network (keys ``alpha``, ``ins``, ``van``).
    """
    obs = getattr(buf, obs_key)
    nxt = getattr(buf, "next_" + obs_key)
    out = {}
    jobs = [("alpha", v_alpha, buf.r_alpha, cfg.lr_value)]
    if v_ins is not None:
        r = buf.r_ins if cfg.ins_reward_source == "ins" else buf.r_victim_hat
        jobs.append(("ins", v_ins, r, cfg.lr_value))
    if van is not None:
        jobs.append(("van", van.net, buf.victim_targets(), cfg.lr_van))
    for name, net, rew, lr in jobs:
        losses = td_epochs(net, obs, rew, nxt, buf.done, cfg.gamma, lr, cfg.value_epochs, cfg.batch_size, rng)
        out[name] = float(np.mean(losses)) if losses else float("nan")
    return out


def rnd_epochs(rnd, feats, cfg, rng):
    losses = []
    n = len(feats)
    for _ in range(cfg.rnd_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            losses.append(rnd_update(rnd, feats[order[start : start + cfg.batch_size]], cfg.lr_rnd))
    return losses
