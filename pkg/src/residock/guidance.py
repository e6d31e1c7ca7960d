"""
Waypoint guidance for docking loops and inspection circuits.

All docking and inspection paths live in the tag* frame.  Each waypoint
carries a constant desired heading, so the vehicle crabs sideways along the
lateral legs while keeping the station in view instead of turning toward
the next point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameMismatchError, GeometryError
from .geometry import FrameId, Pose, wrap_angle
from .vehicle import ThrustCommand

DEFAULT_HEADING_TOL = math.radians(5.0)


class PathKind(str, enum.Enum):
    LEFT_LOOP = "LEFT_LOOP"
    RIGHT_LOOP = "RIGHT_LOOP"
    INSPECTION_LEFT = "INSPECTION_LEFT"
    INSPECTION_RIGHT = "INSPECTION_RIGHT"
    HOMING_DESCENT = "HOMING_DESCENT"


@dataclass(frozen=True)
class Waypoint:
    position: np.ndarray
    heading: float = 0.0
    radius: float = 0.25
    heading_tol: float = DEFAULT_HEADING_TOL
    frame: FrameId = FrameId.TAG_STAR
    speed: float = 0.1
    name: str = ""
    # heave speed limit; defaults to ``speed``
    vertical_speed: float | None = None
    # keep cruise speed until inside the acceptance sphere instead of braking early
    pass_through: bool = False

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))
        if self.radius <= 0:
            raise ValueError("acceptance radius must be positive")
        if not 0 < self.heading_tol < math.pi:
            raise ValueError("heading tolerance must lie in (0, pi)")
        if self.speed <= 0:
            raise ValueError("waypoint speed must be positive")


@dataclass(frozen=True)
class WaypointPath:
    waypoints: tuple
    kind: PathKind
    stand_off: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if np.linalg.norm(a.position - b.position) <= a.radius + b.radius:
                raise GeometryError(f"waypoints {a.name or '?'} and {b.name or '?'} have overlapping spheres")

    def __len__(self):
        return len(self.waypoints)

    def __getitem__(self, i):
        return self.waypoints[i]

    def positions(self):
        return np.array([w.position for w in self.waypoints])

    def length(self, start=None):
        pts = self.positions()
        if start is not None:
            pts = np.vstack([np.asarray(start, dtype=float), pts])
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))

    def duration(self, start=None):
        """Nominal traversal time using each leg's waypoint speed."""
        pts = [w.position for w in self.waypoints]
        speeds = [w.speed for w in self.waypoints]
        if start is not None:
            pts.insert(0, np.asarray(start, dtype=float))
        else:
            speeds = speeds[1:]
        legs = np.linalg.norm(np.diff(np.array(pts), axis=0), axis=1)
        return float(np.sum(legs / np.asarray(speeds)))


def waypoint_reached(estimate, wp):
    """Closed acceptance sphere plus heading gate."""
    if estimate.frame != wp.frame:
        raise FrameMismatchError(f"estimate in {estimate.frame.value}, waypoint in {wp.frame.value}")
    d = float(np.linalg.norm(estimate.position - wp.position))
    return d <= wp.radius and abs(wrap_angle(estimate.yaw - wp.heading)) <= wp.heading_tol


def select_initial_waypoint(estimate, left, right):
    """Globally nearest waypoint over both loops.

    Ties prefer the right loop, then the lower index.
    """
    estimate.require(FrameId.TAG_STAR)
    best = None
    for path in (right, left):
        d = np.linalg.norm(path.positions() - estimate.position, axis=1)
        i = int(np.argmin(d))
        if best is None or d[i] < best[0] - 1e-12:
            best = (d[i], path, i)
    return best[1], best[2]


# ----------------------------------------------------------------------------
# Path construction
# ----------------------------------------------------------------------------

def _tag_star(geometry, tag_star_station):
    """Map station-frame points to tag* (axes shared, origin shifted)."""
    origin = np.asarray(tag_star_station, dtype=float)
    return lambda p: np.asarray(p, dtype=float) - origin


def build_loops(geometry, stand_off=1.5, tag_star_station=(-0.5, 0.0, -0.875), transit_speed=0.07,
                final_speed=0.035, radius=0.25, entry_radius=0.1):
    """U-shaped left/right docking loops in tag*.

    Lateral start beside the station -> corner off the front edge -> frontal
    alignment on the entry axis -> funnel entry -> dock point.
    """
    if stand_off < 0.5:
        raise GeometryError("stand-off must be at least 0.5 m")
    g = geometry
    to_star = _tag_star(g, tag_star_station)
    bmin, bmax = g.box_min, g.box_max
    ec = np.asarray(g.entry_center, dtype=float)
    lateral = bmax[1] + stand_off
    front_x = bmin[0] - stand_off - 0.5
    mid_x = 0.5 * (bmin[0] + bmax[0])
    z = ec[2]

    shared = [
        Waypoint(to_star((front_x, ec[1], z)), 0.0, radius, speed=transit_speed, name="frontal"),
        Waypoint(to_star((bmin[0] - 0.5, ec[1], z)), 0.0, entry_radius, speed=final_speed, name="entry"),
        Waypoint(to_star(g.dock_point), g.dock_heading, entry_radius, speed=final_speed, name="dock"),
    ]

    def side(sign, kind):
        wps = [
            Waypoint(to_star((mid_x, sign * lateral, z)), -sign * math.pi / 2, radius, speed=transit_speed,
                     name="lateral"),
            Waypoint(to_star((front_x, sign * lateral, z)), -sign * math.pi / 2, radius, speed=transit_speed,
                     name="corner"),
        ]
        return WaypointPath(wps + shared, kind, stand_off)

    left, right = side(-1, PathKind.LEFT_LOOP), side(1, PathKind.RIGHT_LOOP)
    for wp in left.waypoints[:2] + right.waypoints[:2]:
        p = wp.position + np.asarray(tag_star_station)
        if np.linalg.norm(p - np.clip(p, bmin, bmax)) < 0.3:
            raise GeometryError("loop waypoint inside or touching the station volume")
    return left, right


def build_inspection(geometry, stand_off=1.5, tag_star_station=(-0.5, 0.0, -0.875), cruise_speed=0.14,
                     radius=0.3):
    """Right and left inspection circuits around the station, facing inward.

    Each circuit leaves the dock vicinity, passes the side and the rear,
    and retraces back to the centre line in front of the entry.
    """
    g = geometry
    to_star = _tag_star(g, tag_star_station)
    bmin, bmax = g.box_min, g.box_max
    ec = np.asarray(g.entry_center, dtype=float)
    z = ec[2]
    fx = bmin[0] - stand_off
    rx = bmax[0] + stand_off
    mid_x = 0.5 * (bmin[0] + bmax[0])
    lat = bmax[1] + stand_off

    def circuit(sign, kind):
        face_side = -sign * math.pi / 2
        pts = [
            ((fx, ec[1], z), 0.0, "start"),
            ((fx, sign * lat, z), -sign * math.pi / 4, "front_corner"),
            ((mid_x, sign * lat, z), face_side, "side"),
            ((rx, sign * lat, z), -sign * 3 * math.pi / 4, "rear_corner"),
            ((rx, ec[1], z), math.pi, "rear"),
            ((rx, sign * lat, z), -sign * 3 * math.pi / 4, "rear_corner_return"),
            ((mid_x, sign * lat, z), face_side, "side_return"),
            ((fx, sign * lat, z), -sign * math.pi / 4, "front_corner_return"),
            ((fx, ec[1], z), 0.0, "end"),
        ]
        wps = [Waypoint(to_star(p), h, radius, speed=cruise_speed, name=n, pass_through=n != "end")
               for p, h, n in pts]
        return WaypointPath(wps, kind, stand_off)

    return circuit(1, PathKind.INSPECTION_RIGHT), circuit(-1, PathKind.INSPECTION_LEFT)


def face_coverage(paths, layout, max_angle=math.radians(45.0)):
    """Faces whose outward normal is within ``max_angle`` of some waypoint's view axis."""
    covered = set()
    for path in paths:
        for wp in path.waypoints:
            axis = np.array([math.cos(wp.heading), math.sin(wp.heading), 0.0])
            for tag in layout.tags:
                c = float(np.dot(axis, -np.asarray(tag.normal)))
                if math.acos(max(-1.0, min(1.0, c))) <= max_angle:
                    covered.add(tag.face)
    return covered


# ----------------------------------------------------------------------------
# Control
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ControllerGains:
    kp: tuple = (6.0, 6.0, 8.0, 2.0)
    ki: tuple = (0.2, 0.2, 0.3, 0.02)
    kd: tuple = (30.0, 30.0, 30.0, 1.5)
    integral_clamp: tuple = (0.5, 0.5, 0.5, 0.3)
    output_clamp: tuple = (6.0, 6.0, 8.0, 1.0)

    def __post_init__(self):
        if min(self.kp) <= 0:
            raise ValueError("proportional gains must be positive")
        if min(self.integral_clamp) <= 0 or min(self.output_clamp) <= 0:
            raise ValueError("clamps must be positive")


@dataclass
class PidState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def reset(self):
        self.integral[:] = 0.0


def control(estimate, target, gains=None, pid=None, dt=0.1):
    """Thrust toward ``target`` from a 15-state estimate.

    Position error is rotated into the body frame and capped (horizontal and
    vertical separately) so the closed-loop equilibrium speed stays below the
    waypoint speed.  Derivative
    action acts on the estimated body velocity.
    """
    gains = gains or ControllerGains()
    x = np.asarray(estimate, dtype=float)
    psi = x[5]
    c, s = math.cos(psi), math.sin(psi)
    e_nav = target.position - x[:3]
    e = np.array([c * e_nav[0] + s * e_nav[1], -s * e_nav[0] + c * e_nav[1], e_nav[2]])
    kp = np.asarray(gains.kp)
    kd = np.asarray(gains.kd)
    cap = target.speed * min(kd[:2] / kp[:2])
    n = float(math.hypot(e[0], e[1]))
    if target.pass_through and n > 1e-9:
        e[:2] *= cap / max(n, target.radius)
    elif n > cap:
        e[:2] *= cap / n
    vspeed = target.speed if target.vertical_speed is None else target.vertical_speed
    vcap = vspeed * kd[2] / kp[2]
    e[2] = min(max(e[2], -vcap), vcap)
    e_psi = wrap_angle(target.heading - psi)
    err = np.array([e[0], e[1], e[2], e_psi])
    vel = np.array([x[6], x[7], x[8], x[11]])

    integral = np.zeros(4) if pid is None else pid.integral
    if pid is not None:
        clamp = np.asarray(gains.integral_clamp)
        pid.integral = np.clip(pid.integral + err * dt, -clamp, clamp)
        integral = pid.integral
    out = kp * err + np.asarray(gains.ki) * integral - kd * vel
    lim = np.asarray(gains.output_clamp)
    out = np.clip(out, -lim, lim)
    return ThrustCommand(*[float(v) for v in out])


def estimate_pose(estimate, frame=FrameId.TAG_STAR):
    x = np.asarray(estimate, dtype=float)
    return Pose.from_euler(x[:3], x[3], x[4], x[5], frame, FrameId.BODY)
