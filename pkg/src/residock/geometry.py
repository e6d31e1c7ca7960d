"""
Frames, rigid-body transforms and angle helpers.

Conventions used throughout the package:

* World frame is NED (x North, y East, z Down).
* The station frame has x pointing *into* the station from its front face,
  y to the right as seen by a vehicle facing the front, and z down.  The tag*
  navigation frame shares those axes, with its origin on the main tag above
  the entry.
* Quaternions are Hamilton, scalar first ``[w, x, y, z]``, and rotate child
  vectors into the parent frame: ``p_parent = R(q) @ p_child + t``.
* Euler angles are Z-Y-X (yaw, pitch, roll): ``R = Rz(yaw) Ry(pitch) Rx(roll)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameMismatchError

TWO_PI = 2.0 * math.pi


class FrameId(str, enum.Enum):
    WORLD_NED = "WORLD_NED"
    STATION = "STATION"
    TAG_STAR = "TAG_STAR"
    BODY = "BODY"
    CAMERA = "CAMERA"


def wrap_angle(a):
    """Wrap an angle (or array of angles) to the half-open interval (-pi, pi]."""
    # in-range values pass through untouched so wrapping never perturbs them
    if isinstance(a, np.ndarray):
        inside = (a > -math.pi) & (a <= math.pi)
        return np.where(inside, a, math.pi - np.mod(math.pi - a, TWO_PI))
    if -math.pi < a <= math.pi:
        return a
    return math.pi - (math.pi - a) % TWO_PI


# ----------------------------------------------------------------------------
# Quaternion helpers
# ----------------------------------------------------------------------------

def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / math.sqrt(float(q @ q))


def quat_multiply(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q):
    w, x, y, z = (float(v) for v in q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R):
    """Rotation matrix to unit quaternion (Shepperd's method), w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = quat_normalize(q)
    return q if q[0] >= 0.0 else -q


def euler_to_quat(roll, pitch, yaw):
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def matrix_to_euler(R):
    """Z-Y-X Euler angles (roll, pitch, yaw) of a rotation matrix."""
    roll = math.atan2(R[2, 1], R[2, 2])
    pitch = -math.asin(max(-1.0, min(1.0, R[2, 0])))
    yaw = math.atan2(R[1, 0], R[0, 0])
    return wrap_angle(roll), pitch, wrap_angle(yaw)


def quat_to_euler(q):
    return matrix_to_euler(quat_to_matrix(q))


def rotvec_to_quat(v):
    v = np.asarray(v, dtype=float)
    angle = float(np.linalg.norm(v))
    if angle < 1e-12:
        return quat_normalize(np.array([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]]))
    axis = v / angle
    s = math.sin(angle / 2)
    return np.array([math.cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_multiply_batch(a, b):
    """Row-wise Hamilton product of (n, 4) arrays (either side may be a single quaternion)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)


def quat_to_matrix_batch(q):
    """Rotation matrices, shape (n, 3, 3), for an (n, 4) quaternion array."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
    ], axis=-2)


def rotvec_to_quat_batch(v):
    """Row-wise :func:`rotvec_to_quat` for an (n, 3) array."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v, axis=-1)
    half = 0.5 * angle
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(angle < 1e-12, 0.5, np.sin(half) / np.where(angle < 1e-12, 1.0, angle))
    q = np.concatenate([np.cos(half)[..., None], v * k[..., None]], axis=-1)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def euler_to_matrix(roll, pitch, yaw):
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def yaw_matrix(yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# ----------------------------------------------------------------------------
# Poses
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    """Rigid transform of a ``child`` frame expressed in ``frame``."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    frame: FrameId = FrameId.WORLD_NED
    child: FrameId | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        n = math.sqrt(float(q @ q))
        if abs(n - 1.0) > 1e-9:
            q = q / n
        object.__setattr__(self, "orientation", q)

    @classmethod
    def identity(cls, frame=FrameId.WORLD_NED, child=None):
        return cls(np.zeros(3), frame=frame, child=child)

    @classmethod
    def from_euler(cls, position, roll=0.0, pitch=0.0, yaw=0.0, frame=FrameId.WORLD_NED, child=None):
        return cls(position, euler_to_quat(roll, pitch, yaw), frame, child)

    @classmethod
    def from_matrix(cls, R, position, frame=FrameId.WORLD_NED, child=None):
        return cls(position, matrix_to_quat(R), frame, child)

    @property
    def rotation(self):
        return quat_to_matrix(self.orientation)

    @property
    def euler(self):
        return quat_to_euler(self.orientation)

    @property
    def roll(self):
        return self.euler[0]

    @property
    def pitch(self):
        return self.euler[1]

    @property
    def yaw(self):
        return self.euler[2]

    def transform_point(self, p):
        return self.rotation @ np.asarray(p, dtype=float) + self.position

    def in_frame(self, frame):
        return Pose(self.position, self.orientation, frame, self.child)

    def require(self, frame):
        if self.frame != frame:
            raise FrameMismatchError(f"expected pose in {frame.value}, got {self.frame.value}")
        return self


def compose(a, b):
    """Return ``a ∘ b``: ``b`` is expressed in ``a``'s child frame."""
    if a.child is not None and b.frame != a.child:
        raise FrameMismatchError(f"cannot compose {a.child.value}-child pose with {b.frame.value} pose")
    q = quat_normalize(quat_multiply(a.orientation, b.orientation))
    return Pose(a.position + a.rotation @ b.position, q, a.frame, b.child)


def invert(p):
    R = p.rotation
    frame = p.child if p.child is not None else p.frame
    return Pose(-R.T @ p.position, quat_conjugate(p.orientation), frame, p.frame)


def pose_error(a, b):
    """Translation distance and absolute rotation angle between two poses."""
    dq = quat_multiply(quat_conjugate(a.orientation), b.orientation)
    angle = 2.0 * math.atan2(np.linalg.norm(dq[1:]), abs(dq[0]))
    return float(np.linalg.norm(a.position - b.position)), angle


@dataclass(frozen=True)
class BodyVelocity:
    """Body-frame linear (m/s) and angular (rad/s) velocity."""

    u: float = 0.0
    v: float = 0.0
    w: float = 0.0
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(x) for x in self.as_array()):
            raise ValueError("body velocity must be finite")

    def as_array(self):
        return np.array([self.u, self.v, self.w, self.p, self.q, self.r])
