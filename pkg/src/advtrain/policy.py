"""Diagonal-Gaussian policies and scalar value networks.

The policy trunk emits ``2 * action_dim`` numbers. The first half is the
pre-squash mean. The second half is the log-std: its weight rows are pinned
to zero so it reduces to the bias, i.e. a learned state-independent
parameter that is stored in the same checkpoint as the trunk.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from advtrain import nn
from advtrain.errors import NumericError, UsageError
from advtrain.nn.mlp import Gradients

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
RATIO_MIN, RATIO_MAX = 1e-8, 1e8


class Sample(NamedTuple):
    action: np.ndarray  # squashed, in [-1, 1]
    presquash: np.ndarray
    log_prob: float


@dataclass(eq=False)
class GaussianPolicy:
    trunk: nn.MlpNet
    role: str = "attacker"

    @property
    def obs_dim(self):
        return self.trunk.layer_dims[0]

    @property
    def action_dim(self):
        return self.trunk.layer_dims[-1] // 2

    @property
    def log_std(self):
        return self.trunk.biases[-1][self.action_dim :]

    def mean_presquash(self, obs):
        return nn.predict(self.trunk, obs)[..., : self.action_dim]

    def mean_action(self, obs):
        return np.tanh(self.mean_presquash(obs))

    def pin_log_std(self):
        """Re-impose the log-std structure after an optimiser step."""
        a = self.action_dim
        self.trunk.weights[-1][a:, :] = 0.0
        np.clip(self.trunk.biases[-1][a:], LOG_STD_MIN, LOG_STD_MAX, out=self.trunk.biases[-1][a:])

    def set_log_std(self, value):
        self.trunk.biases[-1][self.action_dim :] = value
        self.pin_log_std()

    def copy(self):
        return GaussianPolicy(self.trunk.copy(), self.role)


def make_policy(obs_dim, action_dim, rng, hidden=(128, 64), log_std_init=0.0, role="attacker", head_scale=0.01):
    """Fresh policy. ``head_scale`` shrinks the mean head so the initial
    policy starts near the zero action instead of a random constant bias."""
    trunk = nn.init([obs_dim, *hidden, 2 * action_dim], ["tanh"] * len(hidden) + ["identity"], rng)
    trunk.weights[-1][:action_dim] *= head_scale
    trunk.biases[-1][action_dim:] = log_std_init
    p = GaussianPolicy(trunk, role)
    p.pin_log_std()
    return p


def _gauss_logp(u, mean, log_std):
    z = (u - mean) * np.exp(-log_std)
    return (-0.5 * z * z - log_std - HALF_LOG_2PI).sum(axis=-1)


def sample_action(p, obs, rng, deterministic=False):
    """Draw ``u ~ N(mean, std^2)`` and squash with tanh.

    The returned ``log_prob`` is the Gaussian density of the pre-squash draw
    (no tanh Jacobian term).
    """
    obs = np.asarray(obs, dtype=np.float64)
    if not np.isfinite(obs).all():
        raise UsageError("observation contains non-finite entries")
    mean = p.mean_presquash(obs)
    log_std = p.log_std
    if deterministic:
        u = mean.copy()
    else:
        u = mean + np.exp(log_std) * rng.standard_normal(p.action_dim)
    return Sample(np.clip(np.tanh(u), -1.0, 1.0), u, float(_gauss_logp(u, mean, log_std)))


def log_prob(p, obs, presquash):
    return _gauss_logp(np.asarray(presquash, dtype=np.float64), p.mean_presquash(obs), p.log_std)


def importance_ratio(p_new, p_old, obs, presquash):
    if p_new.trunk.layer_dims != p_old.trunk.layer_dims:
        raise UsageError("policies have different architectures")
    r = np.exp(log_prob(p_new, obs, presquash) - log_prob(p_old, obs, presquash))
    return np.clip(r, RATIO_MIN, RATIO_MAX)


class LogProbTape(NamedTuple):
    tape: object
    diff: np.ndarray
    inv_var: np.ndarray
    out_shape: tuple


def forward_log_prob(p, obs, presquash):
    """Batched log-probs plus the context :func:`backward_log_prob` needs."""
    a = p.action_dim
    out, tape = nn.forward(p.trunk, obs)
    log_std = p.log_std
    inv_var = np.exp(-2.0 * log_std)
    diff = np.asarray(presquash, dtype=np.float64) - out[:, :a]
    logp = (-0.5 * diff * diff * inv_var - log_std - HALF_LOG_2PI).sum(axis=1)
    return logp, LogProbTape(tape, diff, inv_var, out.shape)


def backward_log_prob(p, ctx, dlogp):
    """Trunk gradient of ``sum(dlogp * log_prob)``; pinned log-std weight rows get zero."""
    a = p.action_dim
    g_out = np.zeros(ctx.out_shape)
    g_out[:, :a] = dlogp[:, None] * ctx.diff * ctx.inv_var
    grads = nn.backward(p.trunk, ctx.tape, g_out)
    grads.weights[-1][a:, :] = 0.0
    grads.biases[-1][a:] = (dlogp[:, None] * (ctx.diff * ctx.diff * ctx.inv_var - 1.0)).sum(axis=0)
    return grads


def log_prob_and_grad(p, obs, presquash, dlogp):
    """Batched log-probs and the trunk gradient of ``sum(dlogp * log_prob)``."""
    logp, ctx = forward_log_prob(p, obs, presquash)
    return logp, backward_log_prob(p, ctx, dlogp)


@dataclass(eq=False)
class ValueNet:
    net: nn.MlpNet
    role: str = "attacker_extrinsic"

    def copy(self):
        return ValueNet(self.net.copy(), self.role)


VALUE_ROLES = ("attacker_extrinsic", "attacker_intrinsic", "victim_defense")


def make_value(obs_dim, rng, hidden=(128, 64), role="attacker_extrinsic", head_scale=0.0):
    """Fresh critic. The output layer is scaled by ``head_scale`` (zero by
    default) so an untrained critic predicts a flat value instead of a random
    potential whose one-step differences would masquerade as advantages."""
    net = nn.init([obs_dim, *hidden, 1], ["tanh"] * len(hidden) + ["identity"], rng)
    net.weights[-1] *= head_scale
    return ValueNet(net, role)


def value(v, obs):
    out = nn.predict(v.net, obs)
    return out[..., 0] if out.ndim > 1 else float(out[0])


def td_update(net, obs, rewards, next_obs, done, gamma, lr, bootstrap_net=None):
    """One semi-gradient TD(0) Adam step on a scalar-output MLP.

    Targets ``r + gamma * V(s') * (1 - done)`` are computed first and held
    fixed. Returns the pre-step mean squared TD error.
    """
    bootstrap_net = net if bootstrap_net is None else bootstrap_net
    obs = np.atleast_2d(obs)
    target = rewards + gamma * nn.predict(bootstrap_net, np.atleast_2d(next_obs))[:, 0] * (1.0 - done)
    out, tape = nn.forward(net, obs)
    err = out[:, 0] - target
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise NumericError("non-finite TD loss; step skipped")
    g = np.zeros_like(out)
    g[:, 0] = 2.0 * err / len(err)
    grads = nn.backward(net, tape, g)
    nn.adam_step(net, grads, lr)
    return loss


__all__ = [
    "GaussianPolicy",
    "Gradients",
    "Sample",
    "ValueNet",
    "importance_ratio",
    "log_prob",
    "backward_log_prob",
    "forward_log_prob",
    "log_prob_and_grad",
    "make_policy",
    "make_value",
    "sample_action",
    "td_update",
    "value",
]
