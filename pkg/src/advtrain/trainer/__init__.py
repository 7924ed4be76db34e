"""Rollouts, advantages, PPO updates and the attack/defense training stages."""

from advtrain.trainer.advantages import (
    AdvantageRecord,
    Advantages,
    compute_advantages,
    fill_intrinsic,
    fuse,
    normalize,
    td_advantage,
)
from advtrain.trainer.attack import (
    METRIC_FIELDS,
    AttackConfig,
    AttackResult,
    ConvergenceMonitor,
    CrashWindow,
    ppo_attack_update,
    train_attack,
    value_updates,
)
from advtrain.trainer.config import PpoConfig
from advtrain.trainer.defense import DEFENSE_METRIC_FIELDS, DefenseResult, make_attacker_value, train_defense
from advtrain.trainer.ppo import PpoStats, clipped_surrogate, ppo_update, td_epochs
from advtrain.trainer.rollout import EpisodeOutcome, RolloutBuffer, Transition, collect_rollouts, concat

__all__ = [
    "AdvantageRecord", "Advantages", "AttackConfig", "AttackResult", "ConvergenceMonitor",
    "CrashWindow", "DEFENSE_METRIC_FIELDS", "DefenseResult", "EpisodeOutcome", "METRIC_FIELDS",
    "PpoConfig", "PpoStats", "RolloutBuffer", "Transition", "clipped_surrogate", "collect_rollouts",
    "compute_advantages", "concat", "fill_intrinsic", "fuse", "make_attacker_value", "normalize",
    "ppo_attack_update", "ppo_update", "td_advantage", "td_epochs", "train_attack", "train_defense",
    "value_updates",
]
