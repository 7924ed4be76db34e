"""Per-step simulator kernels (numba and numpy twins).

Every public kernel has a ``*_nb`` (njit scalar loops) and a ``*_np``
(vectorised numpy) implementation; the unsuffixed name is bound to the
backend chosen in :mod:`advtrain._accel`. Both variants are importable
regardless of the backend so tests can compare them directly.
"""

import math

import numpy as np

from advtrain._accel import njit, select

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------- heading


@njit
def wrap_angle_nb(a):
    b = math.pi - a
    r = b - TWO_PI * math.floor(b / TWO_PI)
    return math.pi - r


def wrap_angle_np(a):
    b = np.pi - np.asarray(a, dtype=np.float64)
    out = np.pi - (b - TWO_PI * np.floor(b / TWO_PI))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- dynamics


@njit
def bicycle_step_nb(x, y, heading, speed, accel_cmd, steer_cmd, dt, a_max, delta_max, wheelbase, v_max):
    accel_cmd = min(1.0, max(-1.0, accel_cmd))
    steer_cmd = min(1.0, max(-1.0, steer_cmd))
    nx = x + speed * math.cos(heading) * dt
    ny = y + speed * math.sin(heading) * dt
    nv = min(v_max, max(0.0, speed + accel_cmd * a_max * dt))
    nh = wrap_angle_nb(heading + (nv / wheelbase) * math.tan(steer_cmd * delta_max) * dt)
    return nx, ny, nh, nv


def bicycle_step_np(x, y, heading, speed, accel_cmd, steer_cmd, dt, a_max, delta_max, wheelbase, v_max):
    accel_cmd = np.clip(accel_cmd, -1.0, 1.0)
    steer_cmd = np.clip(steer_cmd, -1.0, 1.0)
    nx = x + speed * np.cos(heading) * dt
    ny = y + speed * np.sin(heading) * dt
    nv = np.clip(speed + accel_cmd * a_max * dt, 0.0, v_max)
    nh = wrap_angle_np(heading + (nv / wheelbase) * np.tan(steer_cmd * delta_max) * dt)
    return float(nx), float(ny), float(nh), float(nv)


# ---------------------------------------------------------------- footprints


@njit
def box_corners_nb(x, y, heading, length, width):
    c = math.cos(heading)
    s = math.sin(heading)
    hl = 0.5 * length
    hw = 0.5 * width
    out = np.empty((4, 2))
    # counter-clockwise from front-left
    signs = ((1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0))
    for i in range(4):
        fl = signs[i][0] * hl
        fw = signs[i][1] * hw
        out[i, 0] = x + fl * c - fw * s
        out[i, 1] = y + fl * s + fw * c
    return out


_SIGNS = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])


def box_corners_np(x, y, heading, length, width):
    c, s = math.cos(heading), math.sin(heading)
    local = _SIGNS * np.array([0.5 * length, 0.5 * width])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


@njit
def sat_overlap_nb(x1, y1, h1, l1, w1, x2, y2, h2, l2, w2):
    a = box_corners_nb(x1, y1, h1, l1, w1)
    b = box_corners_nb(x2, y2, h2, l2, w2)
    # rectangles: two unique edge normals each
    axes = np.empty((4, 2))
    axes[0, 0] = math.cos(h1)
    axes[0, 1] = math.sin(h1)
    axes[1, 0] = -math.sin(h1)
    axes[1, 1] = math.cos(h1)
    axes[2, 0] = math.cos(h2)
    axes[2, 1] = math.sin(h2)
    axes[3, 0] = -math.sin(h2)
    axes[3, 1] = math.cos(h2)
    for k in range(4):
        ax = axes[k, 0]
        ay = axes[k, 1]
        amin = 1e300
        amax = -1e300
        bmin = 1e300
        bmax = -1e300
        for i in range(4):
            pa = a[i, 0] * ax + a[i, 1] * ay
            pb = b[i, 0] * ax + b[i, 1] * ay
            amin = min(amin, pa)
            amax = max(amax, pa)
            bmin = min(bmin, pb)
            bmax = max(bmax, pb)
        if amax < bmin or bmax < amin:
            return False
    return True


def sat_overlap_np(x1, y1, h1, l1, w1, x2, y2, h2, l2, w2):
    a = box_corners_np(x1, y1, h1, l1, w1)
    b = box_corners_np(x2, y2, h2, l2, w2)
    axes = np.array(
        [
            [math.cos(h1), math.sin(h1)],
            [-math.sin(h1), math.cos(h1)],
            [math.cos(h2), math.sin(h2)],
            [-math.sin(h2), math.cos(h2)],
        ]
    )
    pa = a @ axes.T
    pb = b @ axes.T
    separated = (pa.max(axis=0) < pb.min(axis=0)) | (pb.max(axis=0) < pa.min(axis=0))
    return not bool(separated.any())


# ---------------------------------------------------------------- road corridor


@njit
def road_excess_nb(px, py, straights, arcs):
    """Smallest (distance to centreline - half width) over all lane segments."""
    best = 1e300
    for i in range(straights.shape[0]):
        x0 = straights[i, 0]
        y0 = straights[i, 1]
        dx = straights[i, 2] - x0
        dy = straights[i, 3] - y0
        seg2 = dx * dx + dy * dy
        t = 0.0
        if seg2 > 0.0:
            t = ((px - x0) * dx + (py - y0) * dy) / seg2
            t = min(1.0, max(0.0, t))
        ex = px - (x0 + t * dx)
        ey = py - (y0 + t * dy)
        d = math.sqrt(ex * ex + ey * ey) - straights[i, 4]
        best = min(best, d)
    for i in range(arcs.shape[0]):
        cx = arcs[i, 0]
        cy = arcs[i, 1]
        r = arcs[i, 2]
        a0 = arcs[i, 3]
        a1 = arcs[i, 4]
        ang = math.atan2(py - cy, px - cx)
        lo = min(a0, a1)
        sweep = abs(a1 - a0)
        rel = (ang - lo) - TWO_PI * math.floor((ang - lo) / TWO_PI)
        if rel <= sweep:
            d = abs(math.hypot(px - cx, py - cy) - r)
        else:
            d0 = math.hypot(px - (cx + r * math.cos(a0)), py - (cy + r * math.sin(a0)))
            d1 = math.hypot(px - (cx + r * math.cos(a1)), py - (cy + r * math.sin(a1)))
            d = min(d0, d1)
        best = min(best, d - arcs[i, 5])
    return best


def road_excess_np(px, py, straights, arcs):
    best = np.inf
    if len(straights):
        p0 = straights[:, 0:2]
        seg = straights[:, 2:4] - p0
        seg2 = (seg * seg).sum(axis=1)
        rel = np.array([px, py]) - p0
        t = np.divide((rel * seg).sum(axis=1), seg2, out=np.zeros_like(seg2), where=seg2 > 0)
        t = np.clip(t, 0.0, 1.0)
        err = rel - t[:, None] * seg
        best = min(best, float((np.sqrt((err * err).sum(axis=1)) - straights[:, 4]).min()))
    if len(arcs):
        cx, cy, r, a0, a1, hw = arcs.T
        ang = np.arctan2(py - cy, px - cx)
        lo = np.minimum(a0, a1)
        sweep = np.abs(a1 - a0)
        rel = (ang - lo) - TWO_PI * np.floor((ang - lo) / TWO_PI)
        on_arc = np.abs(np.hypot(px - cx, py - cy) - r)
        d0 = np.hypot(px - (cx + r * np.cos(a0)), py - (cy + r * np.sin(a0)))
        d1 = np.hypot(px - (cx + r * np.cos(a1)), py - (cy + r * np.sin(a1)))
        d = np.where(rel <= sweep, on_arc, np.minimum(d0, d1))
        best = min(best, float((d - hw).min()))
    return best


# ---------------------------------------------------------------- observation


@njit
def encode_obs_nb(ex, ey, eh, ev, ox, oy, oh, ov, gx, gy, t_frac, pos_scale, dist_scale, v_max):
    out = np.empty(11)
    out[0] = ex / pos_scale
    out[1] = ey / pos_scale
    out[2] = eh / math.pi
    out[3] = ev / v_max
    out[4] = (ox - ex) / (2.0 * pos_scale)
    out[5] = (oy - ey) / (2.0 * pos_scale)
    out[6] = (ov * math.cos(oh) - ev * math.cos(eh)) / (2.0 * v_max)
    out[7] = (ov * math.sin(oh) - ev * math.sin(eh)) / (2.0 * v_max)
    out[8] = wrap_angle_nb(oh - eh) / math.pi
    out[9] = math.hypot(gx - ex, gy - ey) / dist_scale
    out[10] = t_frac
    for i in range(11):
        out[i] = min(1.0, max(-1.0, out[i]))
    return out


def encode_obs_np(ex, ey, eh, ev, ox, oy, oh, ov, gx, gy, t_frac, pos_scale, dist_scale, v_max):
    out = np.array(
        [
            ex / pos_scale,
            ey / pos_scale,
            eh / np.pi,
            ev / v_max,
            (ox - ex) / (2.0 * pos_scale),
            (oy - ey) / (2.0 * pos_scale),
            (ov * np.cos(oh) - ev * np.cos(eh)) / (2.0 * v_max),
            (ov * np.sin(oh) - ev * np.sin(eh)) / (2.0 * v_max),
            wrap_angle_np(oh - eh) / np.pi,
            np.hypot(gx - ex, gy - ey) / dist_scale,
            t_frac,
        ]
    )
    return np.clip(out, -1.0, 1.0)


# ---------------------------------------------------------------- route progress


@njit
def route_progress_nb(px, py, pts, cum):
    """Arc length of the closest point on polyline ``pts`` (cumulative lengths ``cum``)."""
    best_d = 1e300
    best_s = 0.0
    for i in range(pts.shape[0] - 1):
        x0 = pts[i, 0]
        y0 = pts[i, 1]
        dx = pts[i + 1, 0] - x0
        dy = pts[i + 1, 1] - y0
        seg2 = dx * dx + dy * dy
        t = 0.0
        if seg2 > 0.0:
            t = min(1.0, max(0.0, ((px - x0) * dx + (py - y0) * dy) / seg2))
        ex = px - (x0 + t * dx)
        ey = py - (y0 + t * dy)
        d = ex * ex + ey * ey
        if d < best_d:
            best_d = d
            best_s = cum[i] + t * (cum[i + 1] - cum[i])
    return best_s


def route_progress_np(px, py, pts, cum):
    p0 = pts[:-1]
    seg = pts[1:] - p0
    seg2 = (seg * seg).sum(axis=1)
    rel = np.array([px, py]) - p0
    t = np.divide((rel * seg).sum(axis=1), seg2, out=np.zeros_like(seg2), where=seg2 > 0)
    t = np.clip(t, 0.0, 1.0)
    err = rel - t[:, None] * seg
    i = int(np.argmin((err * err).sum(axis=1)))
    return float(cum[i] + t[i] * (cum[i + 1] - cum[i]))


wrap_angle = select(wrap_angle_nb, wrap_angle_np)
bicycle_step = select(bicycle_step_nb, bicycle_step_np)
box_corners = select(box_corners_nb, box_corners_np)
sat_overlap = select(sat_overlap_nb, sat_overlap_np)
road_excess = select(road_excess_nb, road_excess_np)
encode_obs = select(encode_obs_nb, encode_obs_np)
route_progress = select(route_progress_nb, route_progress_np)
