"""
15-state extended Kalman filter.

State ordering::

    [x, y, z, roll, pitch, yaw, u, v, w, p, q, r, du, dv, dw]

Pose is the body frame relative to (and expressed in) the navigation frame,
tag* for docking and world NED for homing.  Velocities and accelerations are
body-frame.  Linear motion uses a constant-acceleration model, attitude a
constant-rate model.  Every measurement used here is a direct selection of
state components, so the update Jacobian is a row-selection matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteStateError, SingularInnovationError
from .geometry import FrameId, euler_to_matrix, wrap_angle

N_STATES = 15
X, Y, Z, ROLL, PITCH, YAW, U, V, W, P, Q, R, AX, AY, AZ = range(N_STATES)
POS = slice(0, 3)
ANG = slice(3, 6)
VEL = slice(6, 9)
RATE = slice(9, 12)
ACC = slice(12, 15)
ANGLE_STATES = (ROLL, PITCH, YAW)
STATE_NAMES = ("x", "y", "z", "roll", "pitch", "yaw", "u", "v", "w", "p", "q", "r", "du", "dv", "dw")


@dataclass(frozen=True)
class EkfConfig:
    # process noise spectral densities per block; Q = diag(...) * dt
    q_pos: float = 1e-5
    q_ang: float = 1e-5
    q_vel: float = 2e-4
    q_rate: float = 1e-5
    q_acc: float = 1e-3
    # standard deviations used when a packet does not carry its own covariance
    dvl_std: float = 0.01
    gyro_std: float = 0.002
    accel_std: float = 0.02
    compass_std: float = math.radians(2.0)
    depth_std: float = 0.02
    usbl_std: float = 0.5
    marker_floor_std: float = 1e-3
    # < 1 trusts the camera more than its own noise model suggests
    camera_confidence: float = 0.5
    compass_enabled: bool = True
    initial_std: tuple = (0.5, 0.5, 0.5, 0.05, 0.05, 0.2, 0.1, 0.1, 0.1, 0.05, 0.05, 0.05, 0.1, 0.1, 0.1)

    def __post_init__(self):
        terms = (self.q_pos, self.q_ang, self.q_vel, self.q_rate, self.q_acc, self.dvl_std, self.gyro_std,
                 self.accel_std, self.compass_std, self.depth_std, self.usbl_std, self.marker_floor_std,
                 self.camera_confidence)
        if min(terms) <= 0:
            raise ValueError("all noise terms must be positive")

    def process_noise(self, dt):
        d = [self.q_pos] * 3 + [self.q_ang] * 3 + [self.q_vel] * 3 + [self.q_rate] * 3 + [self.q_acc] * 3
        return np.diag(d) * dt

    def initial_covariance(self):
        return np.diag(np.square(self.initial_std))


# ----------------------------------------------------------------------------
# Measurement packets
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkerPose:
    """Camera-derived pose ``[x, y, z, roll, pitch, yaw]`` in the navigation frame."""

    pose: np.ndarray
    cov: np.ndarray
    timestamp: float


@dataclass(frozen=True)
class Dvl:
    velocity: np.ndarray
    timestamp: float
    cov: np.ndarray | None = None


@dataclass(frozen=True)
class Imu:
    rates: np.ndarray
    accel: np.ndarray
    timestamp: float
    heading: float | None = None
    cov: np.ndarray | None = None


@dataclass(frozen=True)
class Depth:
    z: float
    timestamp: float
    var: float | None = None


@dataclass(frozen=True)
class UsblPosition:
    north: float
    east: float
    timestamp: float
    var: float | None = None


def observation(packet, config):
    """``(state indices, measurement vector, covariance)`` for a packet."""
    if isinstance(packet, MarkerPose):
        cov = np.asarray(packet.cov, dtype=float) * config.camera_confidence
        cov = cov + np.eye(6) * config.marker_floor_std ** 2
        return (X, Y, Z, ROLL, PITCH, YAW), np.asarray(packet.pose, dtype=float), cov
    if isinstance(packet, Dvl):
        cov = packet.cov if packet.cov is not None else np.eye(3) * config.dvl_std ** 2
        return (U, V, W), np.asarray(packet.velocity, dtype=float), cov
    if isinstance(packet, Imu):
        idx = [P, Q, R, AX, AY, AZ]
        z = list(packet.rates) + list(packet.accel)
        var = [config.gyro_std ** 2] * 3 + [config.accel_std ** 2] * 3
        if packet.heading is not None and config.compass_enabled:
            idx.append(YAW)
            z.append(packet.heading)
            var.append(config.compass_std ** 2)
        cov = np.diag(var)
        if packet.cov is not None:
            cov = np.asarray(packet.cov, dtype=float)[: len(idx), : len(idx)]
        return tuple(idx), np.asarray(z, dtype=float), cov
    if isinstance(packet, Depth):
        var = packet.var if packet.var is not None else config.depth_std ** 2
        return (Z,), np.array([packet.z]), np.array([[var]])
    if isinstance(packet, UsblPosition):
        var = packet.var if packet.var is not None else config.usbl_std ** 2
        return (X, Y), np.array([packet.north, packet.east]), np.eye(2) * var
    raise TypeError(f"unsupported measurement packet {type(packet).__name__}")


# ----------------------------------------------------------------------------
# Process model
# ----------------------------------------------------------------------------

def _euler_rate_matrix(roll, pitch):
    sr, cr = math.sin(roll), math.cos(roll)
    tp, cp = math.tan(pitch), math.cos(pitch)
    return np.array([
        [1.0, sr * tp, cr * tp],
        [0.0, cr, -sr],
        [0.0, sr / cp, cr / cp],
    ])


def _rotation_partials(roll, pitch, yaw):
    """dR/droll, dR/dpitch, dR/dyaw for R = Rz(yaw) Ry(pitch) Rx(roll)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    d_roll = np.array([
        [0.0, cy * sp * cr + sy * sr, -cy * sp * sr + sy * cr],
        [0.0, sy * sp * cr - cy * sr, -sy * sp * sr - cy * cr],
        [0.0, cp * cr, -cp * sr],
    ])
    d_pitch = np.array([
        [-cy * sp, cy * cp * sr, cy * cp * cr],
        [-sy * sp, sy * cp * sr, sy * cp * cr],
        [-cp, -sp * sr, -sp * cr],
    ])
    d_yaw = np.array([
        [-sy * cp, -sy * sp * sr - cy * cr, -sy * sp * cr + cy * sr],
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [0.0, 0.0, 0.0],
    ])
    return d_roll, d_pitch, d_yaw


def propagate(state, dt):
    """Noise-free process model f(x, dt)."""
    x = np.asarray(state, dtype=float)
    out = x.copy()
    roll, pitch, yaw = x[ANG]
    Rm = euler_to_matrix(roll, pitch, yaw)
    out[POS] = x[POS] + Rm @ (x[VEL] * dt + 0.5 * x[ACC] * dt * dt)
    out[ANG] = wrap_angle(x[ANG] + _euler_rate_matrix(roll, pitch) @ x[RATE] * dt)
    out[VEL] = x[VEL] + x[ACC] * dt
    return out


def process_jacobian(state, dt):
    """Analytic df/dx of :func:`propagate`."""
    x = np.asarray(state, dtype=float)
    roll, pitch, yaw = x[ANG]
    F = np.eye(N_STATES)
    Rm = euler_to_matrix(roll, pitch, yaw)
    disp = x[VEL] * dt + 0.5 * x[ACC] * dt * dt
    dR = _rotation_partials(roll, pitch, yaw)
    F[POS, ANG] = np.column_stack([d @ disp for d in dR])
    F[POS, VEL] = Rm * dt
    F[POS, ACC] = 0.5 * Rm * dt * dt

    sr, cr = math.sin(roll), math.cos(roll)
    tp, cp = math.tan(pitch), math.cos(pitch)
    p, q, r = x[RATE]
    # partials of the Euler-rate map times the body rates
    d_roll = np.array([q * cr * tp - r * sr * tp, -q * sr - r * cr, q * cr / cp - r * sr / cp])
    sec2 = 1.0 / (cp * cp)
    d_pitch = np.array([(q * sr + r * cr) * sec2, 0.0, (q * sr + r * cr) * tp / cp])
    F[ANG, ROLL] += d_roll * dt
    F[ANG, PITCH] += d_pitch * dt
    F[ANG, RATE] = _euler_rate_matrix(roll, pitch) * dt
    F[VEL, ACC] = np.eye(3) * dt
    return F


def _symmetrize(P):
    return 0.5 * (P + P.T)


def _check_finite(*arrays):
    for a in arrays:
        if not math.isfinite(float(np.sum(a))) and not np.all(np.isfinite(a)):
            raise NonFiniteStateError("non-finite filter input")


def predict(state, cov, dt, config=None):
    """Propagate mean and covariance by ``dt`` seconds (0 < dt <= 0.5)."""
    if not 0.0 < dt <= 0.5:
        raise ValueError("dt must lie in (0, 0.5]")
    config = config or EkfConfig()
    _check_finite(state, cov)
    F = process_jacobian(state, dt)
    new_state = propagate(state, dt)
    new_cov = _symmetrize(F @ cov @ F.T + config.process_noise(dt))
    return new_state, new_cov


@dataclass(frozen=True)
class InnovationStats:
    innovation: np.ndarray
    S: np.ndarray
    nis: float
    indices: tuple


def stacked_observation(packets, config):
    """Joint observation of several simultaneous packets (block-diagonal noise)."""
    obs = [observation(p, config) for p in packets]
    idx = np.concatenate([np.asarray(o[0]) for o in obs])
    z = np.concatenate([o[1] for o in obs])
    Rm = np.zeros((len(idx), len(idx)))
    k = 0
    for o in obs:
        n = len(o[0])
        Rm[k:k + n, k:k + n] = o[2]
        k += n
    return idx, z, Rm


def update(state, cov, packet, config=None):
    """EKF correction with wrap-aware angle innovations and a Joseph-form covariance.

    ``packet`` may also be a list of simultaneous packets, applied as one
    joint correction.
    """
    config = config or EkfConfig()
    _check_finite(state, cov)
    if isinstance(packet, (list, tuple)):
        idx, z, Rm = stacked_observation(packet, config)
    else:
        idx, z, Rm = observation(packet, config)
    idx = np.asarray(idx)
    y = z - state[idx]
    ang = (idx >= ROLL) & (idx <= YAW)
    if ang.any():
        y[ang] = wrap_angle(y[ang])

    PHt = cov[:, idx]
    S = PHt[idx] + Rm
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise SingularInnovationError("innovation covariance is not positive definite") from None
    if not np.all(np.isfinite(L)) or np.min(np.diag(L)) < 1e-12:
        raise SingularInnovationError("innovation covariance is singular")
    L_inv = np.linalg.inv(L)
    K = PHt @ (L_inv.T @ L_inv)

    new_state = state + K @ y
    new_state[3:6] = wrap_angle(new_state[3:6])
    H = np.zeros((len(idx), N_STATES))
    H[np.arange(len(idx)), idx] = 1.0
    IKH = np.eye(N_STATES) - K @ H
    new_cov = _symmetrize(IKH @ cov @ IKH.T + K @ Rm @ K.T)
    w = L_inv @ y
    nis = float(w @ w)
    return new_state, new_cov, InnovationStats(y, S, nis, tuple(int(i) for i in idx))


def nees(estimate, cov, truth, indices=None):
    """Normalised estimation error squared, with wrapped angle residuals."""
    e = np.asarray(estimate, dtype=float) - np.asarray(truth, dtype=float)
    idx = list(range(len(e))) if indices is None else list(indices)
    for k in ANGLE_STATES:
        if k < len(e):
            e[k] = wrap_angle(e[k])
    e = e[idx]
    P = np.asarray(cov, dtype=float)[np.ix_(idx, idx)]
    return float(e @ np.linalg.solve(P, e))


def derive_vertical_offset(rov_depth, station_depth):
    """Vertical separation between the station and the vehicle (metres, >0 when above)."""
    if rov_depth < 0 or station_depth < 0:
        raise ValueError("depths must be non-negative")
    return station_depth - rov_depth


@dataclass
class Ekf:
    """A filter instance: owns its mean, covariance and clock.

    Packets older than the filter clock are dropped and counted.
    """

    config: EkfConfig = field(default_factory=EkfConfig)
    frame: FrameId = FrameId.TAG_STAR
    state: np.ndarray = field(default_factory=lambda: np.zeros(N_STATES))
    cov: np.ndarray = None
    t: float = 0.0
    dropped: int = 0
    last_stats: InnovationStats | None = None

    def __post_init__(self):
        if self.cov is None:
            self.cov = self.config.initial_covariance()

    def reset(self, state, t, cov=None):
        self.state = np.asarray(state, dtype=float).copy()
        self.cov = self.config.initial_covariance() if cov is None else np.asarray(cov, dtype=float).copy()
        self.t = t

    def predict_to(self, t):
        dt = t - self.t
        while dt > 1e-12:
            h = min(dt, 0.5)
            self.state, self.cov = predict(self.state, self.cov, h, self.config)
            dt -= h
        self.t = max(self.t, t)

    def update(self, packet):
        """Apply one packet, or a list of packets sharing a timestamp."""
        if isinstance(packet, (list, tuple)):
            stamps = {p.timestamp for p in packet}
            if len(stamps) != 1:
                raise ValueError("a joint update needs packets with one common timestamp")
            stamp = stamps.pop()
        else:
            stamp = packet.timestamp
        if stamp < self.t - 1e-9:
            self.dropped += 1
            return None
        self.predict_to(stamp)
        self.state, self.cov, self.last_stats = update(self.state, self.cov, packet, self.config)
        return self.last_stats

    @property
    def position(self):
        return self.state[POS].copy()

    @property
    def yaw(self):
        return float(self.state[YAW])
