"""One-step TD advantages for the attacker, victim-estimate and intrinsic channels."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from advtrain import nn
from advtrain.curiosity import extract_features, intrinsic_rewards
from advtrain.errors import UsageError


class AdvantageRecord(NamedTuple):
    a_alpha: float
    a_victim: float
    a_ins: float
    a_fused: float


@dataclass
class Advantages:
    """Per-step advantages. ``*_raw`` are pre-normalisation values; the
    unsuffixed arrays are what the policy update consumes."""

    alpha: np.ndarray
    victim: np.ndarray
    ins: np.ndarray
    fused: np.ndarray
    alpha_raw: np.ndarray
    victim_raw: np.ndarray
    ins_raw: np.ndarray
    fused_raw: np.ndarray
    lam: float

    def __len__(self):
        return len(self.fused)

    def records(self, raw=False):
        if raw:
            cols = (self.alpha_raw, self.victim_raw, self.ins_raw, self.fused_raw)
        else:
            cols = (self.alpha, self.victim, self.ins, self.fused)
        return [AdvantageRecord(*(float(c[i]) for c in cols)) for i in range(len(self))]


def td_advantage(net, obs, rewards, next_obs, done, gamma):
    """``r + gamma * V(s') * (1 - done) - V(s)``; zeros when ``net`` is None."""
    if net is None:
        return np.zeros(len(rewards))
    v = nn.predict(net, obs)[:, 0]
    v_next = nn.predict(net, next_obs)[:, 0]
    return rewards + gamma * v_next * (1.0 - done) - v


def gae_advantage(net, obs, rewards, next_obs, done, gamma, lam):
    """Generalised advantage estimate over time-ordered rows.

    Rows must hold whole episodes in order; ``done`` ends the recursion, so
    ``lam=0`` reproduces :func:`td_advantage` and ``lam=1`` is the discounted
    return-to-go minus ``V(s)``.
    """
    delta = td_advantage(net, obs, rewards, next_obs, done, gamma)
    out = np.empty_like(delta)
    acc = 0.0
    for i in range(len(delta) - 1, -1, -1):
        acc = delta[i] + gamma * lam * (1.0 - done[i]) * acc
        out[i] = acc
    return out


def normalize(a, eps=1e-8):
    """Zero-mean / unit-std over the buffer. A constant channel maps to zeros."""
    if len(a) < 2:
        return a - a.mean()
    std = a.std()
    return (a - a.mean()) / (std + eps) if std > eps else np.zeros_like(a)


def fuse(a_alpha, a_ins, lam):
    return a_alpha + lam * a_ins


def fill_intrinsic(buffer, van_snapshot, rnd):
    """Set ``r_ins`` / ``r_ins_raw`` for every transition from the VAN features
    of its state. Returns the features so the RND update can reuse them."""
    feats = extract_features(van_snapshot, buffer.obs_a)
    scaled, raw = intrinsic_rewards(rnd, feats)
    buffer.r_ins[:] = scaled
    buffer.r_ins_raw[:] = raw
    buffer.intrinsic_filled = True
    return feats


def compute_advantages(
    buffer,
    v_alpha,
    van,
    v_ins,
    gamma,
    lam=0.0,
    normalize_channels=True,
    ins_reward_source="ins",
    obs_key="obs_a",
):
    """Advantages for the three channels.

    ``v_alpha``, ``van`` and ``v_ins`` are ``MlpNet`` objects (or ``None`` to
    drop a channel). The victim channel's reward includes the continuation
    tail (see :class:`RolloutBuffer`). ``ins_reward_source="victim"`` reproduces the literal
    variant where the intrinsic channel is fed the estimated victim reward.
    """
    n = len(buffer)
    if n == 0:
        raise UsageError("cannot compute advantages of an empty buffer")
    if v_ins is not None and ins_reward_source == "ins" and not buffer.intrinsic_filled:
        raise UsageError("intrinsic rewards must be filled before computing advantages")
    obs = getattr(buffer, obs_key)
    next_obs = getattr(buffer, "next_" + obs_key)
    done = buffer.done
    r_ins = buffer.r_ins if ins_reward_source == "ins" else buffer.r_victim_hat
    a_alpha = td_advantage(v_alpha, obs, buffer.r_alpha, next_obs, done, gamma)
    a_victim = td_advantage(van, obs, buffer.victim_targets(), next_obs, done, gamma)
    a_ins = td_advantage(v_ins, obs, r_ins, next_obs, done, gamma)
    if normalize_channels:
        n_alpha, n_victim, n_ins = normalize(a_alpha), normalize(a_victim), normalize(a_ins)
    else:
        n_alpha, n_victim, n_ins = a_alpha, a_victim, a_ins
    return Advantages(
        n_alpha, n_victim, n_ins, fuse(n_alpha, n_ins, lam),
        a_alpha, a_victim, a_ins, fuse(a_alpha, a_ins, lam),
        lam,
    )
