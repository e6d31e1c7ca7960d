"""
4-DOF (surge, sway, heave, yaw) dynamics of the mini-ROV.

Roll and pitch are passively stable and kept at zero in the simulated truth.
Damping is applied implicitly on the water-relative velocity, so the update
is dissipative for any step size and the steady state solves
``thrust = linear*v + quadratic*v*|v|`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NonFiniteStateError
from .geometry import FrameId, Pose, wrap_angle

GRAVITY = 9.81


@dataclass(frozen=True)
class VehicleParams:
    # Defaults give ~0.75 m/s terminal surge speed at full thrust.
    mass: float = 10.0
    yaw_inertia: float = 0.25
    added_mass: tuple = (2.0, 6.0, 6.0, 0.1)
    linear_damping: tuple = (4.0, 6.0, 6.0, 0.5)
    quadratic_damping: tuple = (16.0, 20.0, 20.0, 0.5)
    max_thrust: tuple = (12.0, 8.0, 10.0)
    max_yaw_moment: float = 2.0
    max_speed: tuple = (1.0, 0.8, 0.8, 1.5)
    sway_coupling: float = 0.05

    def __post_init__(self):
        if self.mass <= 0 or self.yaw_inertia <= 0:
            raise ValueError("mass and inertia must be positive")
        if min(self.linear_damping) < 0 or min(self.quadratic_damping) < 0:
            raise ValueError("damping must be non-negative")
        if min(self.max_thrust) <= 0 or self.max_yaw_moment <= 0:
            raise ValueError("saturation limits must be positive")

    @property
    def inertia(self):
        m = self.mass
        a = self.added_mass
        return np.array([m + a[0], m + a[1], m + a[2], self.yaw_inertia + a[3]])

    def terminal_speed(self, axis=0, force=None):
        """Steady speed where thrust balances linear + quadratic drag."""
        f = self.max_thrust[axis] if force is None else force
        dl, dq = self.linear_damping[axis], self.quadratic_damping[axis]
        if dq == 0:
            return f / dl
        return (-dl + math.sqrt(dl * dl + 4 * dq * f)) / (2 * dq)


@dataclass(frozen=True)
class ThrustCommand:
    surge: float = 0.0
    sway: float = 0.0
    heave: float = 0.0
    yaw: float = 0.0

    def as_array(self):
        return np.array([self.surge, self.sway, self.heave, self.yaw])

    def saturate(self, params):
        fx, fy, fz = params.max_thrust
        mz = params.max_yaw_moment
        return ThrustCommand(
            min(max(self.surge, -fx), fx),
            min(max(self.sway, -fy), fy),
            min(max(self.heave, -fz), fz),
            min(max(self.yaw, -mz), mz),
        )


@dataclass(frozen=True)
class CurrentField:
    """Steady horizontal current with optional depth profile and station shielding.

    ``shielding`` is the fraction of the current blocked inside the station
    box (0.9 leaves a 10 % residual).  The box is given in the station frame;
    ``station_pose`` places the station in the world.
    """

    velocity: tuple = (0.0, 0.0)
    depth_profile: tuple = ()
    shielding: float = 0.9
    box_min: tuple = (-0.5, -1.0, -1.0)
    box_max: tuple = (0.5, 1.0, 1.0)
    station_pose: Pose | None = None
    wave_amplitude: float = 0.0
    wave_period: float = 6.0
    max_speed: float = 1.5

    def __post_init__(self):
        if math.hypot(*self.velocity) > self.max_speed:
            raise ValueError(f"current speed exceeds {self.max_speed} m/s ceiling")
        if not 0.0 <= self.shielding <= 1.0:
            raise ValueError("shielding factor must lie in [0, 1]")

    def inside_station(self, position):
        if self.station_pose is None:
            return False
        sp = self.station_pose
        local = sp.rotation.T @ (np.asarray(position) - sp.position)
        return bool(np.all(local >= self.box_min) and np.all(local <= self.box_max))

    def velocity_at(self, position):
        """North/East current velocity at a world position."""
        v = np.asarray(self.velocity, dtype=float)
        if self.depth_profile:
            depths, scales = zip(*self.depth_profile)
            v = v * float(np.interp(position[2], depths, scales))
        if self.shielding and self.inside_station(position):
            v = v * (1.0 - self.shielding)
        return v

    def wave_force(self, depth, t):
        """Wave-induced surge force (N, world North) decaying with depth."""
        if self.wave_amplitude == 0.0:
            return 0.0
        wavelength = GRAVITY * self.wave_period ** 2 / (2 * math.pi)
        k = 2 * math.pi / wavelength
        return self.wave_amplitude * math.exp(-k * max(depth, 0.0)) * math.sin(2 * math.pi * t / self.wave_period)


@dataclass(frozen=True)
class LatchState:
    """Magnetic latch at the dock point (station frame)."""

    latched: bool = False
    capture_radius: float = 0.08
    capture_heading_tol: float = math.radians(10.0)
    breakaway_thrust: float = 10.0 / 1.5
    dock_position: tuple = (0.05, 0.0, -0.525)
    dock_heading: float = 0.0


@dataclass(frozen=True)
class VehicleState:
    """World-frame pose ``eta = [x, y, z, yaw]`` and body velocity ``nu = [u, v, w, r]``."""

    eta: np.ndarray = field(default_factory=lambda: np.zeros(4))
    nu: np.ndarray = field(default_factory=lambda: np.zeros(4))
    t: float = 0.0
    latched: bool = False
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def position(self):
        return self.eta[:3]

    @property
    def yaw(self):
        return float(self.eta[3])

    def pose(self):
        return Pose.from_euler(self.eta[:3], 0.0, 0.0, self.eta[3], FrameId.WORLD_NED, FrameId.BODY)

    def kinetic_energy(self, params):
        return 0.5 * float(np.sum(params.inertia * self.nu ** 2))


def latch_check(vehicle_pose, latch):
    """True iff the vehicle is inside the capture radius with aligned heading."""
    vehicle_pose.require(FrameId.STATION)
    d = np.linalg.norm(vehicle_pose.position - np.asarray(latch.dock_position))
    heading_err = abs(wrap_angle(vehicle_pose.yaw - latch.dock_heading))
    return bool(d <= latch.capture_radius and heading_err <= latch.capture_heading_tol)


def breaks_latch(cmd, latch):
    return max(abs(cmd.surge), abs(cmd.heave)) > latch.breakaway_thrust


def step(state, cmd, env, dt, params=None, latch=None):
    """Advance the vehicle by ``dt`` seconds under ``cmd`` in current field ``env``."""
    if not 0.0 < dt <= 0.1:
        raise ValueError("dt must lie in (0, 0.1]")
    params = params or VehicleParams()
    cmd = cmd.saturate(params)
    t_next = state.t + dt

    if state.latched:
        if latch is None or not breaks_latch(cmd, latch):
            return VehicleState(state.eta.copy(), np.zeros(4), t_next, True, np.zeros(3))
        state = replace(state, latched=False, nu=np.zeros(4))

    eta, nu = state.eta, state.nu
    psi = eta[3]
    c, s = math.cos(psi), math.sin(psi)

    cur = env.velocity_at(eta[:3])
    nu_c = np.array([c * cur[0] + s * cur[1], -s * cur[0] + c * cur[1], 0.0, 0.0])

    tau = cmd.as_array()
    tau[1] += params.sway_coupling * tau[0]
    wave = env.wave_force(eta[2], state.t)
    if wave:
        tau[0] += c * wave
        tau[1] -= s * wave

    inertia = params.inertia
    dl = np.asarray(params.linear_damping)
    dq = np.asarray(params.quadratic_damping)
    nu_r = nu - nu_c
    nu_r = (nu_r + dt * tau / inertia) / (1.0 + dt * (dl + dq * np.abs(nu_r)) / inertia)
    nu_new = nu_r + nu_c

    eta_new = eta + dt * np.array([
        c * nu_new[0] - s * nu_new[1],
        s * nu_new[0] + c * nu_new[1],
        nu_new[2],
        nu_new[3],
    ])
    eta_new[3] = wrap_angle(eta_new[3])
    if eta_new[2] < 0.0:
        eta_new[2] = 0.0
        nu_new[2] = max(nu_new[2], 0.0)

    if not (np.all(np.isfinite(eta_new)) and np.all(np.isfinite(nu_new))):
        raise NonFiniteStateError(f"vehicle state diverged at t={t_next:.3f}")
    accel = (nu_new[:3] - nu[:3]) / dt
    return VehicleState(eta_new, nu_new, t_next, False, accel)


def engage_latch(state, dock_world):
    """Freeze ``state`` at the world-frame dock pose ``(position, yaw)``."""
    pos, yaw = dock_world
    eta = np.array([pos[0], pos[1], pos[2], yaw], dtype=float)
    return VehicleState(eta, np.zeros(4), state.t, True, np.zeros(3))


def station_contact(state, station_pose, geometry, radius=0.2, channel_tol=0.03, yaw_tol=math.radians(8.0)):
    """Resolve contact between the vehicle sphere and the station box.

    Entering through the funnel aperture is allowed: the funnel walls centre
    the vehicle laterally and vertically and align its heading.  Touching the
    box anywhere else is a collision.  Returns ``(state, collided)``.
    """
    sp = station_pose
    R = sp.rotation
    p = R.T @ (state.eta[:3] - sp.position)
    lo, hi = geometry.box_min, geometry.box_max
    gap = float(np.linalg.norm(p - np.clip(p, lo, hi)))
    if gap >= radius:
        return state, False
    ec = np.asarray(geometry.entry_center, dtype=float)
    dy, dz = p[1] - ec[1], p[2] - ec[2]
    if not geometry.in_entry_aperture(p[1], p[2]):
        return state, True

    # inside the funnel mouth: walls narrow linearly to the channel tolerance
    depth_in = min(max((p[0] + radius - lo[0]) / (2 * radius), 0.0), 1.0)
    wy = geometry.entry_half_width - radius
    wz = geometry.entry_half_height - radius
    ly = max(channel_tol, wy + (channel_tol - wy) * depth_in)
    lz = max(channel_tol, wz + (channel_tol - wz) * depth_in)
    q = p.copy()
    q[1] = ec[1] + min(max(dy, -ly), ly)
    q[2] = ec[2] + min(max(dz, -lz), lz)
    end_stop = geometry.dock_point[0]
    q[0] = min(q[0], end_stop)
    eta = state.eta.copy()
    nu = state.nu.copy()
    eta[:3] = sp.position + R @ q
    if q[0] > lo[0]:
        rel = wrap_angle(eta[3] - sp.yaw)
        if abs(rel) > yaw_tol:
            eta[3] = wrap_angle(sp.yaw + math.copysign(yaw_tol, rel))
            nu[3] = 0.0
    if not np.allclose(q, p):
        # the walls absorb the velocity pushing into them
        v_world = np.array([math.cos(eta[3]) * nu[0] - math.sin(eta[3]) * nu[1],
                            math.sin(eta[3]) * nu[0] + math.cos(eta[3]) * nu[1], nu[2]])
        v_st = R.T @ v_world
        for k in range(3):
            if q[k] != p[k]:
                v_st[k] = 0.0
        v_world = R @ v_st
        c, s = math.cos(eta[3]), math.sin(eta[3])
        nu[0] = c * v_world[0] + s * v_world[1]
        nu[1] = -s * v_world[0] + c * v_world[1]
        nu[2] = v_world[2]
    return replace(state, eta=eta, nu=nu), False
