"""Defense stage with held-out snapshot selection.

PPO fine-tuning of a competent driver can wander off a good policy, so the
returned victim is the evaluated snapshot with the highest non-crash rate
against the frozen attacker among those that still reach the goal in MC
traffic at ``min_goal_rate`` or better. The untrained copy is a candidate
too. Validation episodes come from ``validation_offset + seed``, disjoint
from the reporting seeds.
"""

from dataclasses import dataclass, field
import logging

from advtrain.baselines import mc_controller
from advtrain.harness.evaluate import evaluate
from advtrain.harness.metrics import non_crash_rate
from advtrain.harness.pretrain import goal_rate
from advtrain.trainer.defense import train_defense

log = logging.getLogger(__name__)


@dataclass
class HardenResult:
    policy: object
    iteration: int
    non_crash: float
    goal_rate: float
    metrics: list = field(default_factory=list)
    train_policy: object = None
    candidates: list = field(default_factory=list)  # (iteration, non_crash, goal_rate)


def harden_victim(attacker, victim, scenario, ppo, rng, section, seed, weights, shaping):
    """Run the defense stage from a :class:`DefenseSection` and select a snapshot."""
    traffic = mc_controller(scenario)
    val_seed = section.validation_offset + int(seed)
    best = {"key": None}
    candidates = []

    def score(p, it):
        outs, _ = evaluate(scenario, attacker, p, section.eval_episodes, val_seed)
        nc = non_crash_rate(outs)
        g = goal_rate(evaluate(scenario, traffic, p, section.eval_episodes, val_seed)[0])
        candidates.append((it, nc, g))
        key = (g >= section.min_goal_rate, nc if g >= section.min_goal_rate else g)
        if best["key"] is None or key > best["key"]:
            best.update(key=key, policy=p.copy(), iteration=it, non_crash=nc, goal=g)
        log.info("defense iteration %d: non-crash %.2f vs attacker, goal rate %.2f in traffic", it, nc, g)
        return nc, g

    if section.select:
        victim_copy = victim.copy()
        if section.log_std_init is not None:
            victim_copy.set_log_std(section.log_std_init)
        score(victim_copy, -1)

    def check(p, row):
        done_ppo = row["iteration"] + 1 - section.value_warmup
        if section.select and done_ppo > 0 and done_ppo % section.eval_every == 0:
            row["val_non_crash"], row["val_goal_rate"] = score(p, row["iteration"])
        return False

    res = train_defense(
        attacker, victim, scenario, ppo, rng,
        n_iterations=section.n_iterations, episode_budget=section.episode_budget, weights=weights,
        shaping=shaping, log_std_init=section.log_std_init, value_warmup=section.value_warmup, stop_check=check,
        gae_lambda=section.gae_lambda,
    )
    if not section.select:
        last = res.metrics[-1] if res.metrics else {}
        return HardenResult(res.policy, len(res.metrics) - 1, 1.0 - last.get("crash_rate", 0.0),
                            last.get("goal_rate", 0.0), res.metrics, res.policy)
    if not candidates or candidates[-1][0] != len(res.metrics) - 1:
        score(res.policy, len(res.metrics) - 1)
    return HardenResult(best["policy"], best["iteration"], best["non_crash"], best["goal"], res.metrics, res.policy,
                        candidates)
