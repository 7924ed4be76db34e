"""Episode collection into a struct-of-arrays rollout buffer."""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from advtrain.curiosity import RewardWeights, estimate_victim_reward
from advtrain.errors import ConfigError
from advtrain.sim.world import (
    TERMINAL_CODES,
    Action,
    Shaping,
    Terminal,
    attacker_reward,
    observe,
    reset,
    step,
    victim_reward_terms,
    victim_true_reward,
    without_attacker,
)

_FIELDS_2D = ("obs_a", "next_obs_a", "obs_v", "next_obs_v", "act_a", "pre_a", "act_v", "pre_v")
_FIELDS_1D = (
    "logp_a", "logp_v", "r_alpha", "r_victim_hat", "r_victim", "r_ins", "r_ins_raw",
    "tail_victim_hat", "tail_victim", "done", "terminal", "episode", "t",
)


class Transition(NamedTuple):
    obs_attacker: np.ndarray
    obs_victim: np.ndarray
    action_attacker: np.ndarray
    presquash_attacker: np.ndarray
    log_prob_attacker: float
    action_victim: np.ndarray
    r_alpha: float
    r_victim_hat: float
    r_ins: float
    terminal: bool
    step: int


@dataclass
class EpisodeOutcome:
    episode: int
    terminal: Terminal
    length: int
    victim_final: object = None
    attacker_final: object = None
    off_road_by: str = ""

    @property
    def crashed(self):
        return self.terminal is Terminal.COLLISION


@dataclass
class VictimSteps:
    """Victim-only transitions from continuations, with ``source`` the buffer
    index of the step whose attacker exit started each continuation."""

    obs: np.ndarray
    next_obs: np.ndarray
    pre: np.ndarray
    logp: np.ndarray
    reward: np.ndarray
    done: np.ndarray
    source: np.ndarray

    def __len__(self):
        return len(self.done)


@dataclass
class RolloutBuffer:
    """Aligned per-step arrays.

    ``done`` marks the last step of an episode and ``terminal`` holds the
    integer terminal code.

    ``tail_victim_hat`` / ``tail_victim`` are zero except on the final step
    of an episode the attacker ended by leaving the road. There they hold
    the discounted victim return (estimated and true reward) of finishing
    the route with the attacker removed, already multiplied by gamma, so
    victim-side value targets see the outcome the truncation hid.
    """

    obs_a: np.ndarray
    next_obs_a: np.ndarray
    obs_v: np.ndarray
    next_obs_v: np.ndarray
    act_a: np.ndarray
    pre_a: np.ndarray
    act_v: np.ndarray
    pre_v: np.ndarray
    logp_a: np.ndarray
    logp_v: np.ndarray
    r_alpha: np.ndarray
    r_victim_hat: np.ndarray
    r_victim: np.ndarray
    r_ins: np.ndarray
    r_ins_raw: np.ndarray
    done: np.ndarray
    tail_victim_hat: np.ndarray
    tail_victim: np.ndarray
    terminal: np.ndarray
    episode: np.ndarray
    t: np.ndarray
    outcomes: list = field(default_factory=list)
    intrinsic_filled: bool = False
    continuation: VictimSteps = None

    def __len__(self):
        return len(self.done)

    def victim_targets(self, true_reward=False):
        """Per-step victim reward with the continuation tail folded in."""
        if true_reward:
            return self.r_victim + self.tail_victim
        return self.r_victim_hat + self.tail_victim_hat

    def transitions(self):
        for i in range(len(self)):
            yield Transition(
                self.obs_a[i], self.obs_v[i], self.act_a[i], self.pre_a[i], float(self.logp_a[i]),
                self.act_v[i], float(self.r_alpha[i]), float(self.r_victim_hat[i]), float(self.r_ins[i]),
                bool(self.done[i]), int(self.t[i]),
            )

    @property
    def n_episodes(self):
        return len(self.outcomes)

    @property
    def n_collisions(self):
        return sum(o.crashed for o in self.outcomes)


def victim_continuation(w, victim, rng, weights, gamma, shaping=Shaping(), record=None):
    """Discounted ``(estimated, true)`` victim returns from ``w`` onwards
    with the attacker taken out of play.

    When ``record`` is a list, ``(obs, next_obs, presquash, log_prob,
    true_reward, done)`` is appended to it for every continuation step.
    """
    w = without_attacker(w)
    idle = Action(0.0, 0.0)
    g_hat = g_true = 0.0
    disc = 1.0
    ov = observe(w, "victim")
    while w.terminal is Terminal.RUNNING:
        dv = victim.act(w, "victim", rng, ov)
        av = Action(float(dv.action[0]), float(dv.action[1]))
        w2 = step(w, av, idle)
        r_true = victim_true_reward(w, av, w2, weights, shaping)
        g_hat += disc * estimate_victim_reward(victim_reward_terms(w, av, w2), weights)
        g_true += disc * r_true
        disc *= gamma
        ov2 = observe(w2, "victim")
        if record is not None:
            record.append((ov, ov2, dv.presquash, dv.log_prob, r_true, w2.terminal is not Terminal.RUNNING))
        w, ov = w2, ov2
    return g_hat, g_true


def _victim_steps(rows, sources):
    n = len(rows)
    cols = list(zip(*rows)) if rows else [()] * 6
    two = lambda c: np.asarray(c, dtype=np.float64).reshape(n, -1) if n else np.zeros((0, 0))
    return VictimSteps(two(cols[0]), two(cols[1]), two(cols[2]), np.asarray(cols[3], dtype=np.float64),
                       np.asarray(cols[4], dtype=np.float64), np.asarray(cols[5], dtype=np.float64),
                       np.asarray(sources, dtype=np.int64))


def collect_rollouts(
    scenario,
    attacker,
    victim,
    n_steps,
    rng,
    weights=RewardWeights(),
    attacker_init="sample",
    shaping=Shaping(),
    first_episode=0,
    max_episodes=None,
    gamma=0.95,
    complete_victim=True,
    record_continuation=False,
):
    """Run whole episodes until at least ``n_steps`` transitions exist.

    ``attacker`` / ``victim`` are controllers (see :mod:`advtrain.controllers`).
    Stepping stops early once ``max_episodes`` episodes have finished.
    With ``complete_victim`` an attacker off-road exit triggers a
    victim-only continuation whose return fills the tail columns.
    ``record_continuation`` also keeps the continuation's victim transitions
    in ``buffer.continuation``.
    """
    if n_steps < 1:
        raise ConfigError("n_steps must be >= 1")
    cols = {k: [] for k in _FIELDS_2D + _FIELDS_1D}
    outcomes = []
    cont_rows, cont_src = [], []
    total = 0
    ep = first_episode
    while total < n_steps and (max_episodes is None or len(outcomes) < max_episodes):
        w = reset(scenario, attacker_init, rng)
        oa = observe(w, "attacker")
        ov = observe(w, "victim")
        while True:
            da = attacker.act(w, "attacker", rng, oa)
            dv = victim.act(w, "victim", rng, ov)
            av = Action(float(dv.action[0]), float(dv.action[1]))
            w2 = step(w, av, Action(float(da.action[0]), float(da.action[1])))
            oa2 = observe(w2, "attacker")
            ov2 = observe(w2, "victim")
            fin = w2.terminal is not Terminal.RUNNING
            cols["obs_a"].append(oa)
            cols["next_obs_a"].append(oa2)
            cols["obs_v"].append(ov)
            cols["next_obs_v"].append(ov2)
            cols["act_a"].append(da.action)
            cols["pre_a"].append(da.presquash)
            cols["act_v"].append(dv.action)
            cols["pre_v"].append(dv.presquash)
            cols["logp_a"].append(da.log_prob)
            cols["logp_v"].append(dv.log_prob)
            cols["r_alpha"].append(attacker_reward(w, w2))
            cols["r_victim_hat"].append(estimate_victim_reward(victim_reward_terms(w, av, w2), weights))
            cols["r_victim"].append(victim_true_reward(w, av, w2, weights, shaping))
            cols["done"].append(1.0 if fin else 0.0)
            tail = (0.0, 0.0)
            if complete_victim and w2.terminal is Terminal.OFF_ROAD and w2.off_road_by == "attacker":
                before = len(cont_rows)
                tail = victim_continuation(w2, victim, rng, weights, gamma, shaping,
                                           cont_rows if record_continuation else None)
                cont_src.extend([len(cols["done"]) - 1] * (len(cont_rows) - before))
            cols["tail_victim_hat"].append(gamma * tail[0])
            cols["tail_victim"].append(gamma * tail[1])
            cols["terminal"].append(TERMINAL_CODES[w2.terminal])
            cols["episode"].append(ep)
            cols["t"].append(w.t)
            total += 1
            w, oa, ov = w2, oa2, ov2
            if fin:
                outcomes.append(EpisodeOutcome(ep, w.terminal, w.t, w.victim, w.attacker, w.off_road_by))
                ep += 1
                break
    n = len(cols["done"])
    arrays = {}
    for k in _FIELDS_2D:
        arrays[k] = np.asarray(cols[k], dtype=np.float64).reshape(n, -1)
    for k in _FIELDS_1D:
        if k in ("r_ins", "r_ins_raw"):
            arrays[k] = np.zeros(n)
        elif k in ("terminal", "episode", "t"):
            arrays[k] = np.asarray(cols[k], dtype=np.int64)
        else:
            arrays[k] = np.asarray(cols[k], dtype=np.float64)
    cont = _victim_steps(cont_rows, cont_src) if record_continuation else None
    return RolloutBuffer(**arrays, outcomes=outcomes, continuation=cont)


def concat(buffers):
    """Merge buffers in the given order (deterministic regardless of who produced them)."""
    buffers = list(buffers)
    out = {}
    for k in _FIELDS_2D + _FIELDS_1D:
        out[k] = np.concatenate([getattr(b, k) for b in buffers])
    outcomes = [o for b in buffers for o in b.outcomes]
    return RolloutBuffer(**out, outcomes=outcomes, intrinsic_filled=all(b.intrinsic_filled for b in buffers))

