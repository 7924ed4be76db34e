"""Two-vehicle world: reset, step, collision, observation and reward terms."""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from advtrain.errors import ConfigError, UsageError
from advtrain.sim import kernels
from advtrain.sim.scenarios import LANE_WIDTH, Pose, ScenarioSpec

OBS_DIM = 11
ACTION_DIM = 2
GHOST_POSE = Pose(1.0e3, 1.0e3, 0.0, 0.0)


class Terminal(str, Enum):
    RUNNING = "running"
    COLLISION = "collision"
    VICTIM_GOAL = "victim_goal"
    TIMEOUT = "timeout"
    OFF_ROAD = "off_road"


TERMINAL_CODES = {t: i for i, t in enumerate(Terminal)}


@dataclass(frozen=True, slots=True)
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float
    length: float = 4.5
    width: float = 2.0


@dataclass(frozen=True, slots=True)
class Action:
    accel_cmd: float = 0.0
    steer_cmd: float = 0.0

    def clamped(self):
        return Action(min(1.0, max(-1.0, float(self.accel_cmd))), min(1.0, max(-1.0, float(self.steer_cmd))))

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]))


@dataclass(frozen=True, slots=True)
class WorldState:
    victim: VehicleState
    attacker: VehicleState
    t: int
    scenario: ScenarioSpec
    terminal: Terminal = Terminal.RUNNING
    attacker_active: bool = True
    off_road_by: str = ""  # "victim", "attacker" or "both" when terminal is OFF_ROAD


def _vehicle(pose, spec):
    v = spec.vehicle
    return VehicleState(float(pose.x), float(pose.y), kernels.wrap_angle(float(pose.heading)), float(pose.speed), v.length, v.width)


def sample_attacker_pose(spec, rng):
    r = spec.attacker_spawn_region
    x = rng.uniform(r.xmin, r.xmax)
    y = rng.uniform(r.ymin, r.ymax)
    return Pose(float(x), float(y), spec.attacker_heading, spec.attacker_speed)


def reset(spec, attacker_init="sample", rng=None):
    """Initial world at ``t=0``.

    ``attacker_init`` is a :class:`Pose`, ``"sample"`` (uniform over the spawn
    region, drawn from ``rng``), ``"center"`` (region centre) or ``"none"``
    (no attacker: parked far away and ignored by collision/off-road checks).
    """
    if not isinstance(spec, ScenarioSpec):
        raise ConfigError("reset needs a ScenarioSpec")
    spec.validate()
    active = True
    if isinstance(attacker_init, Pose):
        pose = attacker_init
    elif attacker_init == "sample":
        if rng is None:
            raise UsageError("sampling the attacker pose needs an rng")
        pose = sample_attacker_pose(spec, rng)
    elif attacker_init == "center":
        cx, cy = spec.attacker_spawn_region.center
        pose = Pose(cx, cy, spec.attacker_heading, spec.attacker_speed)
    elif attacker_init == "none":
        pose, active = GHOST_POSE, False
    else:
        raise ConfigError(f"bad attacker_init {attacker_init!r}")
    return WorldState(_vehicle(spec.victim_spawn, spec), _vehicle(pose, spec), 0, spec, Terminal.RUNNING, active)


def check_collision(v1, v2):
    """Closed-set oriented-rectangle overlap (edge contact counts)."""
    return bool(
        kernels.sat_overlap(v1.x, v1.y, v1.heading, v1.length, v1.width, v2.x, v2.y, v2.heading, v2.length, v2.width)
    )


def _advance(v, a, spec):
    p = spec.vehicle
    x, y, h, s = kernels.bicycle_step(v.x, v.y, v.heading, v.speed, a.accel_cmd, a.steer_cmd, spec.dt, p.a_max, p.delta_max, p.wheelbase, p.v_max)
    return VehicleState(x, y, h, s, v.length, v.width)


def _off_road(v, spec):
    if abs(v.x) > spec.pos_scale or abs(v.y) > spec.pos_scale:
        return True
    return kernels.road_excess(v.x, v.y, spec.straights, spec.arcs) > spec.offroad_margin


def step(w, a_victim, a_attacker):
    """Advance both vehicles one ``dt`` and recompute the terminal flag.

    Precedence when several events coincide: collision, victim goal,
    off-road, timeout.
    """
    if w.terminal is not Terminal.RUNNING:
        raise UsageError(f"cannot step a terminal state ({w.terminal.value})")
    spec = w.scenario
    victim = _advance(w.victim, a_victim, spec)
    attacker = _advance(w.attacker, a_attacker, spec) if w.attacker_active else w.attacker
    t = w.t + 1
    who = ""
    if w.attacker_active and check_collision(victim, attacker):
        term = Terminal.COLLISION
    elif spec.goal_region.contains(victim.x, victim.y):
        term = Terminal.VICTIM_GOAL
    else:
        v_off = _off_road(victim, spec)
        a_off = w.attacker_active and _off_road(attacker, spec)
        if v_off or a_off:
            term = Terminal.OFF_ROAD
            who = "both" if v_off and a_off else ("victim" if v_off else "attacker")
        elif t >= spec.episode_horizon:
            term = Terminal.TIMEOUT
        else:
            term = Terminal.RUNNING
    return WorldState(victim, attacker, t, spec, term, w.attacker_active, who)


def without_attacker(w):
    """Running copy of ``w`` with the attacker parked out of play."""
    return replace(w, attacker=_vehicle(GHOST_POSE, w.scenario), attacker_active=False,
                   terminal=Terminal.RUNNING, off_road_by="")


def observe(w, role):
    spec = w.scenario
    if role == "victim":
        ego, other = w.victim, w.attacker
        gx, gy = spec.goal_region.center
    elif role == "attacker":
        ego, other = w.attacker, w.victim
        gx, gy = spec.attacker_goal
    else:
        raise UsageError(f"role must be 'victim' or 'attacker', got {role!r}")
    return kernels.encode_obs(
        ego.x, ego.y, ego.heading, ego.speed,
        other.x, other.y, other.heading, other.speed,
        gx, gy, w.t / spec.episode_horizon,
        spec.pos_scale, spec.dist_scale, spec.vehicle.v_max,
    )


def decode_relative_position(obs, spec):
    """Inverse of the relative-position normalisation (entries 4 and 5)."""
    return obs[4] * 2.0 * spec.pos_scale, obs[5] * 2.0 * spec.pos_scale


def victim_reward_terms(w_prev, a_victim, w_next):
    """``(r_target, r_acc, r_collision)`` for one transition."""
    r_target = 1.0 if (w_next.terminal is Terminal.VICTIM_GOAL and w_prev.terminal is Terminal.RUNNING) else 0.0
    acc = min(1.0, max(-1.0, float(a_victim.accel_cmd)))
    r_collision = 1.0 if (w_next.terminal is Terminal.COLLISION and w_prev.terminal is Terminal.RUNNING) else 0.0
    return r_target, acc * acc, r_collision


def attacker_reward(w_prev, w_next):
    return 1.0 if (w_next.terminal is Terminal.COLLISION and w_prev.terminal is Terminal.RUNNING) else 0.0


def route_progress(w):
    spec = w.scenario
    return kernels.route_progress(w.victim.x, w.victim.y, spec.victim_route, spec.victim_route_cum)


@dataclass(frozen=True)
class Shaping:
    """Dense terms added to the victim's own training reward.

    ``progress_weight`` scales route progress (normalised by route length),
    ``offroad_penalty`` is charged once on leaving the road and
    ``lane_weight`` charges squared lateral offset from the route per step
    (in lane widths, capped at one).
    """

    progress_weight: float = 10.0
    offroad_penalty: float = 1.0
    lane_weight: float = 2.0

    def __post_init__(self):
        if min(self.progress_weight, self.offroad_penalty, self.lane_weight) < 0:
            raise ConfigError("shaping weights must be non-negative")


def victim_true_reward(w_prev, a_victim, w_next, weights, shaping=Shaping()):
    """Reward the victim itself trains on: the three weighted terminal/comfort
    terms plus the dense shaping terms."""
    r_target, r_acc, r_col = victim_reward_terms(w_prev, a_victim, w_next)
    r = weights.lambda1 * r_target - weights.lambda2 * r_acc - weights.lambda3 * r_col
    spec = w_prev.scenario
    r += shaping.progress_weight * (route_progress(w_next) - route_progress(w_prev)) / spec.victim_route_length
    if shaping.lane_weight:
        off = min(1.0, route_distance(w_next, "victim") / LANE_WIDTH)
        r -= shaping.lane_weight * off * off
    if w_next.terminal is Terminal.OFF_ROAD:
        r -= shaping.offroad_penalty
    return r


def route_distance(w, route="attacker"):
    """Distance from a vehicle's centre to the nearest waypoint of a route."""
    pts = w.scenario.attacker_route if route == "attacker" else w.scenario.victim_route
    v = w.attacker if route == "attacker" else w.victim
    return float(np.hypot(pts[:, 0] - v.x, pts[:, 1] - v.y).min())
