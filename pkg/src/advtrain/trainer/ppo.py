"""Clipped-surrogate PPO updates with an optional subtracted opponent term.

The maximised per-sample objective is::

    min(rho * A, clip(rho, 1-eps, 1+eps) * A) - min(rho * B, clip(rho, 1-eps, 1+eps) * B)

where ``A`` is the learner's (fused) advantage and ``B`` the opponent-value
advantage; with ``B`` absent this is ordinary clipped PPO. Both terms share
the learner's ratio ``rho``.
"""

from dataclasses import dataclass
import logging

import numpy as np

from advtrain import nn
from advtrain.errors import NumericError
from advtrain.policy import RATIO_MAX, RATIO_MIN, backward_log_prob, forward_log_prob, td_update

log = logging.getLogger(__name__)


def clipped_surrogate(ratio, adv, eps):
    """Value and d/d(ratio) of ``min(ratio*adv, clip(ratio)*adv)``."""
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    take_unclipped = unclipped <= clipped
    val = np.where(take_unclipped, unclipped, clipped)
    grad = np.where(take_unclipped, adv, 0.0)
    return val, grad


@dataclass
class PpoStats:
    objective: float = 0.0
    ratio_mean: float = 1.0
    clip_fraction: float = 0.0
    first_objective: float = float("nan")
    first_ratio_max_dev: float = float("nan")
    steps: int = 0
    aborted: bool = False
    epochs: int = 0
    approx_kl: float = 0.0
    kl_stopped: bool = False

    @property
    def policy_loss(self):
        return -self.objective


def ppo_update(policy, obs, presquash, logp_old, adv, opp_adv, cfg, rng):
    """Run up to ``cfg.epochs_per_update`` epochs of minibatch Adam ascent in place.

    With ``cfg.target_kl`` set, the update stops at the first minibatch whose
    approximate KL between the sampling and current policy exceeds
    ``1.5 * target_kl``. The subtracted opponent term is not clipped on the
    upside, so this is what bounds the step size when it is active.
    """
    n = len(obs)
    eps = cfg.clip_eps
    objs, ratios, clips = [], [], []
    stats = PpoStats()
    for epoch in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logp, ctx = forward_log_prob(policy, obs[idx], presquash[idx])
            if cfg.target_kl is not None:
                log_r = logp - logp_old[idx]
                stats.approx_kl = float(np.mean(np.expm1(log_r) - log_r))
                if stats.approx_kl > 1.5 * cfg.target_kl:
                    stats.kl_stopped = True
                    break
            ratio = np.clip(np.exp(logp - logp_old[idx]), RATIO_MIN, RATIO_MAX)
            val, g = clipped_surrogate(ratio, adv[idx], eps)
            if opp_adv is not None:
                val_o, g_o = clipped_surrogate(ratio, opp_adv[idx], eps)
                val = val - val_o
                g = g - g_o
            obj = float(val.mean())
            if not np.isfinite(obj):
                log.warning("non-finite PPO objective at epoch %d; update aborted", epoch)
                stats.aborted = True
                break
            if stats.steps == 0:
                stats.first_objective = obj
                stats.first_ratio_max_dev = float(np.abs(ratio - 1.0).max())
            objs.append(obj)
            ratios.append(float(ratio.mean()))
            clips.append(float((np.abs(ratio - 1.0) > eps).mean()))
            # loss = -mean(val); d loss / d logp_i = -g_i * ratio_i / B
            grads = backward_log_prob(policy, ctx, -g * ratio / len(idx))
            try:
                nn.adam_step(policy.trunk, grads, cfg.lr_policy)
            except NumericError:
                log.warning("non-finite policy gradient; update aborted")
                stats.aborted = True
                break
            policy.pin_log_std()
            stats.steps += 1
        if stats.aborted:
            break
        stats.epochs = epoch + 1
        if stats.kl_stopped:
            break
    if objs:
        stats.objective = float(np.mean(objs))
        stats.ratio_mean = float(np.mean(ratios))
        stats.clip_fraction = float(np.mean(clips))
    return stats


def td_epochs(net, obs, rewards, next_obs, done, gamma, lr, epochs, batch_size, rng):
    """Shuffled minibatch semi-gradient TD for ``epochs`` passes; returns the
    mean pre-step loss of each minibatch step (list)."""
    n = len(obs)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            try:
                losses.append(td_update(net, obs[idx], rewards[idx], next_obs[idx], done[idx], gamma, lr))
            except NumericError:
                log.warning("non-finite TD step skipped")
    return losses
