"""Attack method ladder: MC random spawn, plain PPO, PPO with the victim term,
and the full curiosity-driven attacker."""

from dataclasses import replace
from enum import Enum

from advtrain.controllers import RouteFollower
from advtrain.errors import ConfigError
from advtrain.trainer.attack import AttackConfig
from advtrain.trainer.config import PpoConfig
from advtrain.trainer.rollout import collect_rollouts


class AttackMethod(str, Enum):
    MC = "mc"
    PPO = "ppo"
    PPO_VA = "ppo-va"
    PROPOSED = "proposed"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for m in cls:
            if m.value == key:
                return m
        raise ConfigError(f"unknown attack method {name!r}; expected one of {', '.join(m.value for m in cls)}")

    @property
    def learned(self):
        return self is not AttackMethod.MC


def build_attacker(method, cfg=None):
    """Trainer configuration for a learned method; ``None`` for MC.

    ``cfg`` is the base :class:`PpoConfig`; method-specific fields override it.
    """
    method = AttackMethod.parse(method)
    cfg = PpoConfig() if cfg is None else cfg
    if method is AttackMethod.MC:
        return None
    if method is AttackMethod.PPO:
        return AttackConfig("PPO", replace(cfg, lambda_curiosity=0.0), use_victim_term=False, use_curiosity=False)
    if method is AttackMethod.PPO_VA:
        return AttackConfig("PPO_VA", replace(cfg, lambda_curiosity=0.0), use_victim_term=True, use_curiosity=False)
    return AttackConfig("PROPOSED", cfg, use_victim_term=True, use_curiosity=True)


def active_terms(method, cfg=None):
    built = build_attacker(method, cfg)
    return frozenset() if built is None else built.active_terms()


def mc_controller(scenario):
    """Route follower holding the scenario's initial attacker speed."""
    return RouteFollower(target_speed=scenario.attacker_speed)


def mc_attack_episode(scenario, rng, victim, weights=None):
    """One MC episode: random spawn, then deterministic route following.

    ``victim`` is a controller. Returns the single-episode rollout buffer.
    """
    kw = {} if weights is None else {"weights": weights}
    return collect_rollouts(scenario, mc_controller(scenario), victim, 1, rng, max_episodes=1, **kw)
