"""Built-in intersection layouts.

World frame: intersection centred at the origin, x east, y north, right-hand
traffic. Both roads are two-lane (lane width 3.5 m), so lane centres sit at
+-1.75 m. The victim always approaches northbound from the south.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from advtrain.errors import ConfigError

LANE_WIDTH = 3.5
HALF_ROAD = LANE_WIDTH  # two lanes per road
LANE_OFFSET = 0.5 * LANE_WIDTH
WORLD_EXTENT = 50.0
# Initial attacker speed. Slow enough that nominal traffic clears the conflict
# zone after the victim; an attacker that accelerates can still reach it.
MC_SPEED = 5.0
SCENARIO_IDS = ("NSJCR", "SJRT", "SJLT")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[xmin, xmax] x [ymin, ymax]``."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def contains(self, x, y):
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    @property
    def center(self):
        return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float
    speed: float = 0.0


@dataclass(frozen=True)
class StraightLane:
    x0: float
    y0: float
    x1: float
    y1: float
    half_width: float


@dataclass(frozen=True)
class ArcLane:
    """Centre-line arc covering polar angles ``[min(a0,a1), max(a0,a1)]``."""

    cx: float
    cy: float
    radius: float
    a0: float
    a1: float
    half_width: float


@dataclass(frozen=True)
class VehicleParams:
    length: float = 4.5
    width: float = 2.0
    wheelbase: float = 2.7
    a_max: float = 2.0
    delta_max: float = 0.5
    v_max: float = 15.0


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    id: str
    lane_geometry: tuple
    victim_route: np.ndarray
    attacker_route: np.ndarray
    victim_spawn: Pose
    attacker_spawn_region: Box
    attacker_heading: float
    attacker_speed: float
    goal_region: Box
    episode_horizon: int = 120
    dt: float = 0.1
    offroad_margin: float = 2.0
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    pos_scale: float = WORLD_EXTENT
    dist_scale: float = 2.0 * WORLD_EXTENT

    def __post_init__(self):
        straights = [g for g in self.lane_geometry if isinstance(g, StraightLane)]
        arcs = [g for g in self.lane_geometry if isinstance(g, ArcLane)]
        object.__setattr__(
            self,
            "_straights",
            np.array([[g.x0, g.y0, g.x1, g.y1, g.half_width] for g in straights], dtype=np.float64).reshape(-1, 5),
        )
        object.__setattr__(
            self,
            "_arcs",
            np.array([[g.cx, g.cy, g.radius, g.a0, g.a1, g.half_width] for g in arcs], dtype=np.float64).reshape(-1, 6),
        )
        route = np.ascontiguousarray(self.victim_route, dtype=np.float64)
        seg = np.diff(route, axis=0)
        cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
        object.__setattr__(self, "victim_route", route)
        object.__setattr__(self, "attacker_route", np.ascontiguousarray(self.attacker_route, dtype=np.float64))
        object.__setattr__(self, "_victim_route_cum", cum)

    @property
    def straights(self):
        return self._straights

    @property
    def arcs(self):
        return self._arcs

    @property
    def victim_route_cum(self):
        return self._victim_route_cum

    @property
    def victim_route_length(self):
        return float(self._victim_route_cum[-1])

    @property
    def attacker_goal(self):
        return tuple(self.attacker_route[-1])

    def validate(self):
        from advtrain.sim.kernels import sat_overlap

        if self.id not in SCENARIO_IDS:
            raise ConfigError(f"unknown scenario id {self.id!r}")
        if self.episode_horizon < 1:
            raise ConfigError("episode_horizon must be >= 1")
        if not self.lane_geometry:
            raise ConfigError("scenario needs at least one lane segment")
        if len(self.victim_route) < 2 or len(self.attacker_route) < 2:
            raise ConfigError("routes need at least two waypoints")
        g = self.goal_region
        if g.xmin > g.xmax or g.ymin > g.ymax:
            raise ConfigError("goal_region bounds inverted")
        r = self.attacker_spawn_region
        if r.xmin > r.xmax or r.ymin > r.ymax:
            raise ConfigError("attacker_spawn_region bounds inverted")
        vs = self.victim_spawn
        if g.contains(vs.x, vs.y):
            raise ConfigError("victim_spawn lies inside goal_region")
        if not 0.0 <= vs.speed <= self.vehicle.v_max or not 0.0 <= self.attacker_speed <= self.vehicle.v_max:
            raise ConfigError("spawn speeds must lie in [0, v_max]")
        cx, cy = r.center
        veh = self.vehicle
        if sat_overlap(
            vs.x, vs.y, vs.heading, veh.length, veh.width,
            cx, cy, 0.0, r.xmax - r.xmin, r.ymax - r.ymin,
        ):
            raise ConfigError("attacker_spawn_region intersects the victim spawn footprint")
        return self


# ---------------------------------------------------------------- helpers


def _line(p0, p1, step=0.5):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    n = max(2, int(math.ceil(np.hypot(*(p1 - p0)) / step)) + 1)
    return np.linspace(p0, p1, n)


def _arc(cx, cy, r, a0, a1, step=0.5):
    n = max(2, int(math.ceil(abs(a1 - a0) * r / step)) + 1)
    a = np.linspace(a0, a1, n)
    return np.column_stack([cx + r * np.cos(a), cy + r * np.sin(a)])


def _join(*pieces):
    out = [pieces[0]]
    for p in pieces[1:]:
        out.append(p[1:])
    return np.concatenate(out)


def _roads():
    e = WORLD_EXTENT
    return (
        StraightLane(0.0, -e, 0.0, e, HALF_ROAD),
        StraightLane(-e, 0.0, e, 0.0, HALF_ROAD),
    )


_VICTIM_SPAWN = Pose(LANE_OFFSET, -40.0, 0.5 * math.pi, 8.0)


def nsjcr(**overrides):
    """Unsignalised crossing: victim northbound straight, attacker eastbound straight."""
    e, lo = WORLD_EXTENT, LANE_OFFSET
    kw = dict(
        id="NSJCR",
        lane_geometry=_roads(),
        victim_route=_line((lo, -e), (lo, e)),
        attacker_route=_line((-e, -lo), (e, -lo)),
        victim_spawn=_VICTIM_SPAWN,
        attacker_spawn_region=Box(-34.0, -24.0, -lo - 0.5, -lo + 0.5),
        attacker_heading=0.0,
        attacker_speed=MC_SPEED,
        goal_region=Box(0.0, HALF_ROAD, 28.0, 40.0),
    )
    kw.update(overrides)
    return ScenarioSpec(**kw).validate()


def sjrt(**overrides):
    """Right turn: victim turns from northbound into the eastbound lane the attacker drives."""
    e, lo = WORLD_EXTENT, LANE_OFFSET
    r = 5.0
    cx, cy = lo + r, -lo - r
    route = _join(_line((lo, -e), (lo, cy)), _arc(cx, cy, r, math.pi, 0.5 * math.pi), _line((cx, -lo), (e, -lo)))
    kw = dict(
        id="SJRT",
        lane_geometry=_roads() + (ArcLane(cx, cy, r, 0.5 * math.pi, math.pi, LANE_OFFSET),),
        victim_route=route,
        attacker_route=_line((-e, -lo), (e, -lo)),
        victim_spawn=_VICTIM_SPAWN,
        attacker_spawn_region=Box(-42.0, -30.0, -lo - 0.5, -lo + 0.5),
        attacker_heading=0.0,
        attacker_speed=MC_SPEED,
        goal_region=Box(24.0, 36.0, -HALF_ROAD, 0.0),
    )
    kw.update(overrides)
    return ScenarioSpec(**kw).validate()


def sjlt(**overrides):
    """Left turn: victim turns across the oncoming southbound attacker."""
    e, lo = WORLD_EXTENT, LANE_OFFSET
    r = 7.0
    cx, cy = lo - r, lo - r
    route = _join(_line((lo, -e), (lo, cy)), _arc(cx, cy, r, 0.0, 0.5 * math.pi), _line((cx, lo), (-e, lo)))
    kw = dict(
        id="SJLT",
        lane_geometry=_roads() + (ArcLane(cx, cy, r, 0.0, 0.5 * math.pi, LANE_OFFSET),),
        victim_route=route,
        attacker_route=_line((-lo, e), (-lo, -e)),
        victim_spawn=_VICTIM_SPAWN,
        attacker_spawn_region=Box(-lo - 0.5, -lo + 0.5, 30.0, 42.0),
        attacker_heading=-0.5 * math.pi,
        attacker_speed=MC_SPEED,
        goal_region=Box(-36.0, -24.0, 0.0, HALF_ROAD),
    )
    kw.update(overrides)
    return ScenarioSpec(**kw).validate()


_BUILDERS = {"NSJCR": nsjcr, "SJRT": sjrt, "SJLT": sjlt}


def get_scenario(scenario_id, **overrides):
    key = str(scenario_id).upper()
    if key not in _BUILDERS:
        raise ConfigError(f"unknown scenario {scenario_id!r}; expected one of {', '.join(SCENARIO_IDS)}")
    return _BUILDERS[key](**overrides)
