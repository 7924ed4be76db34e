"""Frozen-policy evaluation and the cross-training non-crash matrix."""

from dataclasses import dataclass

import numpy as np

from advtrain.baselines import AttackMethod, mc_controller
from advtrain.controllers import Idle, PolicyController
from advtrain.errors import FormatError
from advtrain.harness.metrics import crash_rate
from advtrain.policy import GaussianPolicy
from advtrain.sim.world import ACTION_DIM, OBS_DIM, Action, Terminal, observe, reset, step
from advtrain.trainer.rollout import EpisodeOutcome


def episode_rng(seed, episode):
    """Independent stream per (seed, episode) so results do not depend on order."""
    return np.random.default_rng([int(seed), int(episode)])


def run_episode(scenario, attacker, victim, rng, episode=0, attacker_init="sample", record_actions=False):
    """One episode with frozen controllers. Returns ``(outcome, victim_actions)``."""
    w = reset(scenario, attacker_init, rng)
    actions = []
    while w.terminal is Terminal.RUNNING:
        dv = victim.act(w, "victim", rng)
        da = attacker.act(w, "attacker", rng)
        if record_actions:
            actions.append(dv.action)
        w = step(w, Action(float(dv.action[0]), float(dv.action[1])), Action(float(da.action[0]), float(da.action[1])))
    out = EpisodeOutcome(episode, w.terminal, w.t, w.victim, w.attacker, w.off_road_by)
    return out, (np.asarray(actions).reshape(-1, ACTION_DIM) if record_actions else None)


def evaluate(scenario, attacker, victim, n_episodes, seed, attacker_init="sample", record_actions=False):
    """Evaluate a deterministic victim policy against an attacker controller.

    ``victim`` may be a :class:`GaussianPolicy` (mean actions) or any
    controller. Returns ``(outcomes, actions_per_episode)``.
    """
    if isinstance(victim, GaussianPolicy):
        victim = PolicyController(victim, stochastic=False)
    outs, acts = [], []
    for ep in range(n_episodes):
        o, a = run_episode(scenario, attacker, victim, episode_rng(seed, ep), ep, attacker_init, record_actions)
        outs.append(o)
        acts.append(a)
    return outs, (acts if record_actions else None)


def attacker_controller(method, scenario, policy=None):
    """Controller used when validating against ``method``.

    Learned attackers act stochastically, as they do in training.
    """
    method = AttackMethod.parse(method) if method != "none" else "none"
    if method == "none":
        return Idle()
    if method is AttackMethod.MC:
        return mc_controller(scenario)
    if policy is None:
        raise FormatError(f"no attacker checkpoint for method {method.value}")
    return PolicyController(policy, stochastic=True)


def _check_dims(policy, what):
    if policy.obs_dim != OBS_DIM or policy.action_dim != ACTION_DIM:
        raise FormatError(f"{what} checkpoint has dims {policy.trunk.layer_dims}; expected obs {OBS_DIM}, action {ACTION_DIM}")


@dataclass(frozen=True)
class EvalMatrixCell:
    train_method: str
    eval_method: str
    non_crash_rate: float
    std: float
    per_seed: tuple = ()


def cross_evaluate(scenario, victims, attackers, episodes, seeds):
    """Non-crash rate of each trained victim against each validation attacker.

    ``victims`` maps a training-method label to a victim policy;
    ``attackers`` maps a validation label to an attacker policy (``None`` for
    MC or ``"none"``). Returns cells in (victim, attacker) insertion order.
    """
    cells = []
    for tname, vp in victims.items():
        _check_dims(vp, f"victim '{tname}'")
        for ename, ap in attackers.items():
            if ap is not None:
                _check_dims(ap, f"attacker '{ename}'")
            rates = []
            for seed in seeds:
                method = "none" if ename == "none" else ("mc" if ap is None else ename)
                ctl = attacker_controller(method, scenario, ap)
                outs, _ = evaluate(scenario, ctl, vp, episodes, seed, "none" if ename == "none" else "sample")
                rates.append(1.0 - crash_rate(outs))
            cells.append(EvalMatrixCell(tname, ename, float(np.mean(rates)), float(np.std(rates)), tuple(rates)))
    return cells
