"""Victim value approximation and random-network-distillation novelty.

The value approximation network (``VanNet``) is a one-hidden-layer MLP fitted
by semi-gradient TD to an estimated victim reward; its hidden activations are
the feature space for the RND pair, whose prediction error is the attacker's
intrinsic reward.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from advtrain import nn
from advtrain.errors import ConfigError, UsageError
from advtrain.policy import td_update

FEATURE_DIM = 64


@dataclass(frozen=True)
class RewardWeights:
    lambda1: float = 1.0
    lambda2: float = 0.1
    lambda3: float = 1.0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("reward weights must be non-negative")


def estimate_victim_reward(terms, w):
    r_target, r_acc, r_collision = terms
    return w.lambda1 * r_target - w.lambda2 * r_acc - w.lambda3 * r_collision


# ---------------------------------------------------------------- VAN


@dataclass(eq=False)
class VanNet:
    net: nn.MlpNet
    role: str = "van"

    @property
    def feature_dim(self):
        return self.net.layer_dims[-2]

    def copy(self):
        return VanNet(self.net.copy(), self.role)


def make_van(obs_dim, rng, hidden=FEATURE_DIM, role="van", head_scale=0.0):
    """Fresh VAN with a flat initial value (output layer scaled by ``head_scale``)."""
    net = nn.init([obs_dim, hidden, 1], ["tanh", "identity"], rng)
    net.weights[-1] *= head_scale
    return VanNet(net, role)


def van_value(van, obs):
    out = nn.predict(van.net, obs)
    return out[..., 0] if out.ndim > 1 else float(out[0])


def extract_features(van, obs):
    return nn.hidden(van.net, obs, layer=-2)


def van_td_update(van, obs, r_hat, next_obs, done, gamma=0.95, lr=1e-3):
    if len(np.atleast_2d(obs)) == 0:
        raise UsageError("empty TD batch")
    return td_update(van.net, obs, np.asarray(r_hat, float), next_obs, np.asarray(done, float), gamma, lr)


# ---------------------------------------------------------------- RND


@dataclass
class RunningStd:
    """Streaming population standard deviation (Chan et al. batch merge)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, values):
        x = np.asarray(values, dtype=np.float64).ravel()
        n = x.size
        if n == 0:
            return
        bm = float(x.mean())
        bm2 = float(((x - bm) ** 2).sum())
        tot = self.count + n
        delta = bm - self.mean
        self.mean += delta * n / tot
        self.m2 += bm2 + delta * delta * self.count * n / tot
        self.count = tot

    @property
    def std(self):
        return math.sqrt(self.m2 / self.count) if self.count else 0.0

    def divisor(self):
        # before any data the scale is unknown: pass rewards through unscaled
        return max(self.std, 1e-8) if self.count else 1.0


@dataclass(eq=False)
class RndPair:
    target: nn.MlpNet
    predictor: nn.MlpNet
    normalizer: RunningStd = field(default_factory=RunningStd)


def make_rnd(feature_dim=FEATURE_DIM, rng=None, hidden=(128, 128, 128), out_dim=64):
    dims = [feature_dim, *hidden, out_dim]
    acts = ["relu"] * len(hidden) + ["identity"]
    target = nn.init(dims, acts, rng)
    predictor = nn.init(dims, acts, rng)
    return RndPair(target, predictor)


def raw_intrinsic(rnd, feats):
    d = nn.predict(rnd.predictor, feats) - nn.predict(rnd.target, feats)
    return (d * d).sum(axis=-1)


def intrinsic_rewards(rnd, feats, update_normalizer=True):
    """Return ``(normalised, raw)`` rewards for a batch of feature vectors.

    The whole batch is scaled by the running std as it stood before the call;
    the normaliser then absorbs the batch's raw values.
    """
    feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    if not np.isfinite(feats).all():
        raise UsageError("feature vector contains non-finite entries")
    raw = raw_intrinsic(rnd, feats)
    scaled = raw / rnd.normalizer.divisor()
    if update_normalizer:
        rnd.normalizer.update(raw)
    return scaled, raw


def intrinsic_reward(rnd, feat):
    scaled, _ = intrinsic_rewards(rnd, feat)
    return float(scaled[0])


def rnd_update(rnd, feats, lr=1e-3):
    """One Adam step on the predictor; the target is never touched."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0 or feats.shape[1] == 0:
        raise UsageError("rnd_update needs a non-empty (B, feature_dim) batch")
    target_out = nn.predict(rnd.target, feats)
    out, tape = nn.forward(rnd.predictor, feats)
    diff = out - target_out
    loss = float((diff * diff).sum(axis=1).mean())
    grads = nn.backward(rnd.predictor, tape, 2.0 * diff / len(feats))
    nn.adam_step(rnd.predictor, grads, lr)
    return loss
