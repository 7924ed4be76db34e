"""Action sources for the two vehicles.

A controller maps ``(world, role, rng)`` to a :class:`Decision`. Learned
controllers wrap a :class:`~advtrain.policy.GaussianPolicy`; the route
follower is the scripted driver used by the MC baseline and as background
traffic during victim pretraining.
"""

from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np

from advtrain.policy import sample_action
from advtrain.sim import kernels
from advtrain.sim.world import observe

_ZERO2 = np.zeros(2)


class Decision(NamedTuple):
    action: np.ndarray
    presquash: np.ndarray
    log_prob: float


@dataclass(eq=False)
class PolicyController:
    policy: object
    stochastic: bool = True

    def act(self, w, role, rng, obs=None):
        obs = observe(w, role) if obs is None else obs
        s = sample_action(self.policy, obs, rng, deterministic=not self.stochastic)
        return Decision(s.action, s.presquash, s.log_prob)


@dataclass(eq=False)
class RouteFollower:
    """Constant target speed plus pure-pursuit steering along the vehicle's route."""

    target_speed: float = 8.0
    lookahead: float = 6.0
    speed_gain: float = 1.0

    def command(self, vehicle, route, params):
        d2 = (route[:, 0] - vehicle.x) ** 2 + (route[:, 1] - vehicle.y) ** 2
        i = int(np.argmin(d2))
        seg = np.hypot(*np.diff(route[i:], axis=0).T)
        ahead = np.cumsum(seg)
        j = i + 1 + int(np.searchsorted(ahead, self.lookahead)) if len(ahead) else i
        gx, gy = route[min(j, len(route) - 1)]
        alpha = kernels.wrap_angle(math.atan2(gy - vehicle.y, gx - vehicle.x) - vehicle.heading)
        ld = max(math.hypot(gx - vehicle.x, gy - vehicle.y), 1e-6)
        delta = math.atan2(2.0 * params.wheelbase * math.sin(alpha), ld)
        steer = min(1.0, max(-1.0, delta / params.delta_max))
        accel = min(1.0, max(-1.0, self.speed_gain * (self.target_speed - vehicle.speed) / params.a_max))
        return np.array([accel, steer])

    def act(self, w, role, rng, obs=None):
        spec = w.scenario
        if role == "attacker":
            a = self.command(w.attacker, spec.attacker_route, spec.vehicle)
        else:
            a = self.command(w.victim, spec.victim_route, spec.vehicle)
        return Decision(a, _ZERO2, 0.0)


class Idle:
    """No-op controller for an inactive (absent) attacker."""

    def act(self, w, role, rng, obs=None):
        return Decision(_ZERO2, _ZERO2, 0.0)


@dataclass(eq=False)
class RandomTraffic:
    """Route follower with a per-episode random target speed and per-step
    steering noise. Used to broaden the traffic a victim sees in pretraining."""

    speed_range: tuple = (0.0, 12.0)
    steer_noise: float = 0.3
    _follower: RouteFollower = None

    def act(self, w, role, rng, obs=None):
        if w.t == 0 or self._follower is None:
            self._follower = RouteFollower(target_speed=float(rng.uniform(*self.speed_range)))
        a = self._follower.act(w, role, rng, obs).action.copy()
        a[1] = min(1.0, max(-1.0, a[1] + self.steer_noise * rng.standard_normal()))
        return Decision(a, _ZERO2, 0.0)
