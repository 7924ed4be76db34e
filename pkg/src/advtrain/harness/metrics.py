"""Crash-rate and crash-category metrics."""

from dataclasses import dataclass
import math

import numpy as np

from advtrain.errors import UsageError
from advtrain.sim import kernels
from advtrain.sim.world import Terminal, check_collision

CATEGORIES = ("frontal", "side-left", "rear", "side-right")


@dataclass(frozen=True)
class CrashRecord:
    episode: int
    terminal: Terminal
    impact_x: float  # victim frame, +x forward, +y left
    impact_y: float
    relative_heading: float
    category: str


def crash_rate(outcomes):
    """Fraction of collision episodes in a non-empty window of outcomes."""
    outcomes = list(outcomes)
    if not outcomes:
        raise UsageError("crash_rate needs at least one episode")
    return sum(_is_crash(o) for o in outcomes) / len(outcomes)


def non_crash_rate(outcomes):
    return 1.0 - crash_rate(outcomes)


def _is_crash(o):
    t = getattr(o, "terminal", o)
    return t is Terminal.COLLISION or t == Terminal.COLLISION.value


def _clip_polygon(subject, clip):
    """Sutherland-Hodgman: ``subject`` clipped by convex CCW polygon ``clip``."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        a, b = clip[i], clip[(i + 1) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def side(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

        inp, out = out, []
        if not inp:
            break
        prev = inp[-1]
        for cur in inp:
            sc, sp = side(cur), side(prev)
            if sc >= 0:
                if sp < 0:
                    out.append(_intersect(prev, cur, sp, sc))
                out.append(cur)
            elif sp >= 0:
                out.append(_intersect(prev, cur, sp, sc))
            prev = cur
    return out


def _intersect(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _centroid(poly):
    pts = np.asarray(poly, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-12:
        # edge or corner contact: no area, use the vertex mean
        return float(x.mean()), float(y.mean())
    return float(((x + xn) * cross).sum() / (6 * area)), float(((y + yn) * cross).sum() / (6 * area))


def impact_point(victim, attacker):
    """Centroid of the footprint overlap region, in the victim's frame."""
    vc = kernels.box_corners(victim.x, victim.y, victim.heading, victim.length, victim.width)
    ac = kernels.box_corners(attacker.x, attacker.y, attacker.heading, attacker.length, attacker.width)
    region = _clip_polygon(ac, vc)
    cx, cy = _centroid(region) if region else (attacker.x, attacker.y)
    dx, dy = cx - victim.x, cy - victim.y
    c, s = math.cos(victim.heading), math.sin(victim.heading)
    return c * dx + s * dy, -s * dx + c * dy


def category_from_angle(angle):
    """Quadrant bins at +-45 and +-135 degrees around the forward axis."""
    q = math.pi / 4
    if -q <= angle <= q:
        return "frontal"
    if q < angle < 3 * q:
        return "side-left"
    if -3 * q < angle < -q:
        return "side-right"
    return "rear"


def categorize_crash(victim, attacker):
    if not check_collision(victim, attacker):
        raise UsageError("categorize_crash called on non-colliding vehicles")
    lx, ly = impact_point(victim, attacker)
    return category_from_angle(math.atan2(ly, lx))


def crash_record(outcome):
    """CrashRecord for a collision outcome (``None`` otherwise)."""
    if outcome.terminal is not Terminal.COLLISION:
        return None
    v, a = outcome.victim_final, outcome.attacker_final
    lx, ly = impact_point(v, a)
    return CrashRecord(
        outcome.episode, outcome.terminal, lx, ly,
        float(kernels.wrap_angle(a.heading - v.heading)),
        categorize_crash(v, a),
    )


def category_counts(outcomes):
    counts = dict.fromkeys(CATEGORIES, 0)
    for o in outcomes:
        rec = crash_record(o)
        if rec is not None:
            counts[rec.category] += 1
    return counts
