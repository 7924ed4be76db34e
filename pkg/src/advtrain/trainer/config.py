from dataclasses import asdict, dataclass

from advtrain.errors import ConfigError


@dataclass
class PpoConfig:
    """Optimisation hyper-parameters shared by every PPO stage.

    ``clip_eps`` defaults to 0.2; the looser 0.9 is accepted for runs that
    want to mirror the published table.
    """

    clip_eps: float = 0.2
    gamma: float = 0.95
    lambda_curiosity: float = 0.2
    epochs_per_update: int = 10
    batch_size: int = 128
    buffer_capacity: int = 5000
    rollout_steps: int = 2000
    lr_policy: float = 5e-4
    lr_value: float = 5e-3
    lr_van: float = 1e-3
    lr_rnd: float = 1e-3
    value_epochs: int = 2
    rnd_epochs: int = 2
    log_std_init: float = 0.0
    normalize_advantages: bool = True
    # approximate-KL early stop for the epoch loop; None runs every epoch
    target_kl: float | None = 0.02
    # "ins" (default) or "victim": which reward feeds the intrinsic-channel advantage
    ins_reward_source: str = "ins"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ConfigError("clip_eps must lie in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.lambda_curiosity < 0.0:
            raise ConfigError("lambda_curiosity must be >= 0")
        if self.epochs_per_update < 1 or self.batch_size < 1:
            raise ConfigError("epochs_per_update and batch_size must be >= 1")
        if not 1 <= self.rollout_steps <= self.buffer_capacity:
            raise ConfigError("rollout_steps must lie in [1, buffer_capacity]")
        if self.target_kl is not None and self.target_kl <= 0:
            raise ConfigError("target_kl must be positive or None")
        if self.ins_reward_source not in ("ins", "victim"):
            raise ConfigError("ins_reward_source must be 'ins' or 'victim'")
        for k in ("lr_policy", "lr_value", "lr_van", "lr_rnd"):
            if getattr(self, k) <= 0:
                raise ConfigError(f"{k} must be positive")
        return self

    def to_dict(self):
        return asdict(self)
