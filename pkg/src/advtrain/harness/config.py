"""Typed run configuration loaded from TOML.

Sections mirror the pipeline stages. Unknown sections or keys are errors, as
are values of the wrong type::

    [run]
    scenario = "nsjcr"
    method = "proposed"
    seeds = [0, 1, 2]
    out_dir = "runs/nsjcr"

    [ppo]
    clip_eps = 0.2

    [attack]
    episode_budget = 2000
"""

from dataclasses import asdict, dataclass, field, fields, replace
import hashlib
import json
from pathlib import Path
import sys

from advtrain.baselines import AttackMethod
from advtrain.curiosity import RewardWeights
from advtrain.errors import ConfigError
from advtrain.sim.scenarios import SCENARIO_IDS
from advtrain.sim.world import Shaping
from advtrain.trainer.config import PpoConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STAGES = ("pretrain", "attack", "defense", "cross-eval", "export")


@dataclass(frozen=True)
class RunSection:
    scenario: str = "nsjcr"
    method: str = "proposed"
    seeds: tuple = (0, 1, 2)
    out_dir: str = "runs/default"
    stages: tuple = STAGES
    victim_checkpoint: str = ""
    attacker_checkpoint: str = ""


@dataclass(frozen=True)
class PretrainSection:
    max_iterations: int = 60
    eval_episodes: int = 100
    target_goal_rate: float = 0.9
    min_goal_rate: float = 0.5
    clone_steps: int = 5000
    clone_rounds: int = 4
    rollout_steps: int = 1000


@dataclass(frozen=True)
class AttackSection:
    n_iterations: int = 100000
    episode_budget: int = 2000
    value_warmup: int = 3
    early_stop: bool = False


@dataclass(frozen=True)
class DefenseSection:
    n_iterations: int = 100000
    episode_budget: int = 2000
    value_warmup: int = 3
    log_std_init: float = -1.0
    gae_lambda: float = 0.95
    select: bool = True
    eval_every: int = 2
    eval_episodes: int = 100
    min_goal_rate: float = 0.9
    validation_offset: int = 10000


@dataclass(frozen=True)
class EvalSection:
    episodes: int = 1000
    window: int = 100
    seeds: tuple = (100, 101, 102)
    export_episodes: int = 100


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    ppo: PpoConfig = field(default_factory=lambda: PpoConfig(log_std_init=-0.5, value_epochs=10))
    reward: RewardWeights = field(default_factory=RewardWeights)
    shaping: Shaping = field(default_factory=Shaping)
    pretrain: PretrainSection = field(default_factory=PretrainSection)
    attack: AttackSection = field(default_factory=AttackSection)
    defense: DefenseSection = field(default_factory=DefenseSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        validate(self)

    def to_dict(self):
        return {f.name: _plain(asdict(getattr(self, f.name))) for f in fields(self)}

    def digest(self):
        """Short stable hash of the fully resolved configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @property
    def method(self):
        return AttackMethod.parse(self.run.method)


def _plain(d):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def validate(cfg):
    r = cfg.run
    if r.scenario.upper() not in SCENARIO_IDS:
        raise ConfigError(f"unknown scenario {r.scenario!r}; expected one of {', '.join(SCENARIO_IDS)}")
    AttackMethod.parse(r.method)
    if not r.seeds:
        raise ConfigError("run.seeds must be non-empty")
    for s in r.stages:
        if s not in STAGES:
            raise ConfigError(f"unknown stage {s!r}; expected a subset of {', '.join(STAGES)}")
    if cfg.eval.episodes < 100:
        raise ConfigError("eval.episodes must be >= 100 for reported rates")
    if cfg.eval.window < 1 or not cfg.eval.seeds:
        raise ConfigError("eval.window must be >= 1 and eval.seeds non-empty")
    for name in ("attack", "defense"):
        sec = getattr(cfg, name)
        if sec.episode_budget < 1 or sec.n_iterations < 1:
            raise ConfigError(f"{name}.episode_budget and {name}.n_iterations must be >= 1")
        if sec.value_warmup < 0:
            raise ConfigError(f"{name}.value_warmup must be >= 0")
    d = cfg.defense
    if d.eval_every < 1 or d.eval_episodes < 1:
        raise ConfigError("defense.eval_every and defense.eval_episodes must be >= 1")
    if not (0.0 <= d.min_goal_rate <= 1.0 and 0.0 <= d.gae_lambda <= 1.0):
        raise ConfigError("defense.min_goal_rate and defense.gae_lambda must lie in [0, 1]")
    return cfg


_SECTIONS = {
    "run": RunSection,
    "ppo": PpoConfig,
    "reward": RewardWeights,
    "shaping": Shaping,
    "pretrain": PretrainSection,
    "attack": AttackSection,
    "defense": DefenseSection,
    "eval": EvalSection,
}


def _coerce(section, key, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return tuple(value)
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float) or (default is None and key == "target_kl"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    return value


def from_dict(data, base=None):
    """Overlay a nested mapping on ``base`` (defaults when omitted)."""
    base = RunConfig() if base is None else base
    parts = {}
    for section, values in data.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        current = getattr(base, section)
        known = {f.name for f in fields(current)}
        updates = {}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"unknown key {section}.{key}")
            updates[key] = _coerce(section, key, value, getattr(current, key))
        try:
            parts[section] = replace(current, **updates)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}]: {exc}") from None
    return replace(base, **parts)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(data)
