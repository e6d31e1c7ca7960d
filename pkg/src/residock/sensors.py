"""
Measurement models: USBL, DVL, IMU/compass, depth and a geometric
fiducial-marker camera.

Marker detection is purely geometric.  A tag is detectable when its centre
(and, optionally, its whole outline) lies inside the camera frustum, it is
within the maximum detection range for its size and bit density, it is not
viewed more obliquely than the density allows, and no occlusion blocks it.

The camera frame shares the body axes (x along the optical axis, y right,
z down) and is mounted ``CameraModel.mount_position`` ahead of the body origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InconsistentLayoutError
from .geometry import (
    FrameId,
    Pose,
    compose,
    invert,
    quat_conjugate,
    quat_multiply,
    quat_multiply_batch,
    quat_normalize,
    quat_to_matrix,
    quat_to_matrix_batch,
    rotvec_to_quat,
    rotvec_to_quat_batch,
    wrap_angle,
)
from .layout import Face

SQRT2 = math.sqrt(2.0)


# ----------------------------------------------------------------------------
# USBL
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class UsblParams:
    ping_period: float = 2.0
    sigma: float = 0.5
    dropout: float = 0.1
    cone_diameter: float = 100.0
    station_depth: float = 90.0

    def __post_init__(self):
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout probability must lie in [0, 1]")

    @property
    def half_angle(self):
        return math.atan((self.cone_diameter / 2) / self.station_depth)


@dataclass(frozen=True)
class UsblFix:
    """Horizontal station->vehicle offset.  Deliberately has no depth field."""

    north_offset: float
    east_offset: float
    timestamp: float
    valid: bool = True


def in_usbl_cone(vehicle_pos, head_pos, params):
    h = head_pos[2] - vehicle_pos[2]
    if h <= 0.0:
        return False
    horizontal = math.hypot(vehicle_pos[0] - head_pos[0], vehicle_pos[1] - head_pos[1])
    return horizontal <= h * math.tan(params.half_angle)


def sample_usbl(vehicle_pos, head_pos, params, t, rng):
    """One ping: a noisy fix, or ``None`` outside the cone or on dropout."""
    u = rng.random()
    noise = rng.normal(size=2) * params.sigma
    if not in_usbl_cone(vehicle_pos, head_pos, params) or u < params.dropout:
        return None
    return UsblFix(
        float(vehicle_pos[0] - head_pos[0] + noise[0]),
        float(vehicle_pos[1] - head_pos[1] + noise[1]),
        t,
    )


# ----------------------------------------------------------------------------
# Proprioceptive sensors
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ImuParams:
    gyro_sigma: float = 0.002
    accel_sigma: float = 0.02
    gyro_bias_sigma: float = 0.0005
    compass_sigma: float = math.radians(2.0)
    # random-walk bias; std grows to this value after one minute
    compass_drift_per_min: float = math.radians(0.5)
    compass_drift_enabled: bool = False


@dataclass(frozen=True)
class DvlParams:
    sigma: float = 0.01


@dataclass(frozen=True)
class DepthParams:
    sigma: float = 0.02


@dataclass(frozen=True)
class ImuMeasurement:
    rates: np.ndarray
    accel: np.ndarray
    heading: float | None
    timestamp: float


@dataclass(frozen=True)
class DvlMeasurement:
    velocity: np.ndarray
    timestamp: float


@dataclass(frozen=True)
class DepthMeasurement:
    z: float
    timestamp: float


@dataclass
class ImuBias:
    """Per-trial gyro bias and slowly drifting compass bias."""

    gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    compass: float = 0.0

    @classmethod
    def draw(cls, params, rng):
        return cls(rng.normal(size=3) * params.gyro_bias_sigma, 0.0)

    def advance(self, params, dt, rng):
        if params.compass_drift_enabled:
            self.compass += rng.normal() * params.compass_drift_per_min * math.sqrt(dt / 60.0)


def sample_imu(state, params, bias, rng, t, with_heading=True):
    noise = rng.normal(size=7)
    rates = np.array([0.0, 0.0, state.nu[3]]) + bias.gyro + noise[:3] * params.gyro_sigma
    accel = np.asarray(state.accel, dtype=float) + noise[3:6] * params.accel_sigma
    heading = None
    if with_heading:
        heading = wrap_angle(state.eta[3] + bias.compass + noise[6] * params.compass_sigma)
    return ImuMeasurement(rates, accel, heading, t)


def sample_dvl(state, params, rng, t):
    return DvlMeasurement(state.nu[:3] + rng.normal(size=3) * params.sigma, t)


def sample_depth(state, params, rng, t):
    return DepthMeasurement(float(state.eta[2] + rng.normal() * params.sigma), t)


# ----------------------------------------------------------------------------
# Camera and fiducial markers
# ----------------------------------------------------------------------------

def _default_view_limits():
    return {4: math.radians(70), 5: math.radians(60), 6: math.radians(55), 7: math.radians(50)}


@dataclass(frozen=True)
class CameraModel:
    hfov: float = math.radians(80.0)
    vfov: float = math.radians(50.0)
    width_px: int = 1920
    min_cell_px: float = 4.0
    # 4x4 codes carry too little redundancy to decode at the generic cell size
    cell_px_override: dict = field(default_factory=lambda: {4: 6.0})
    # clear-water default; the deep site profile shortens it
    attenuation_length: float = 6.0
    min_contrast: float = 0.2
    view_limits: dict = field(default_factory=_default_view_limits)
    mount_position: tuple = (0.2, 0.0, 0.0)
    require_full_tag: bool = True
    pos_noise: float = 0.004
    rot_noise: float = 0.004

    def __post_init__(self):
        if not (0 < self.hfov < math.pi and 0 < self.vfov < math.pi):
            raise ValueError("field of view must lie in (0, pi)")
        if self.attenuation_length <= 0:
            raise ValueError("attenuation length must be positive")

    @property
    def focal_px(self):
        return (self.width_px / 2) / math.tan(self.hfov / 2)

    @property
    def mount(self):
        return Pose(self.mount_position, frame=FrameId.BODY, child=FrameId.CAMERA)

    def cell_px_required(self, density):
        return self.cell_px_override.get(int(density), self.min_cell_px)

    def view_limit(self, density):
        return self.view_limits[int(density)]

    @property
    def attenuation_range(self):
        if math.isinf(self.attenuation_length):
            return math.inf
        return self.attenuation_length * math.log(1.0 / self.min_contrast)

    def noiseless(self):
        return replace(self, pos_noise=0.0, rot_noise=0.0)


def max_detection_range(tag, cam):
    """Pinhole cell-size limit capped by the water attenuation limit."""
    n = int(tag.density)
    pinhole = (tag.size / (n + 2)) * cam.focal_px / cam.cell_px_required(n)
    return min(pinhole, cam.attenuation_range)


@dataclass(frozen=True)
class FishEvent:
    """A fish crossing the view: blocks ``covered`` tag ids during the window."""

    t_start: float
    duration: float
    covered: frozenset

    def active(self, t):
        return self.t_start <= t < self.t_start + self.duration


def generate_fish_schedule(rng, rate, horizon, duration_range=(1.0, 3.0), coverage_range=(0.5, 1.0), n_ids=21):
    """Poisson-arriving occlusion windows over ``[0, horizon)``."""
    events = []
    if rate <= 0:
        return ()
    t = rng.exponential(1.0 / rate)
    while t < horizon:
        dur = rng.uniform(*duration_range)
        p = rng.uniform(*coverage_range)
        keys = rng.random(n_ids)
        events.append(FishEvent(float(t), float(dur), frozenset(int(i) for i in np.flatnonzero(keys < p))))
        t += rng.exponential(1.0 / rate)
    return tuple(events)


@dataclass(frozen=True)
class Occlusions:
    """Everything that can hide a tag: equipment boxes, fish, the funnel walls."""

    masks: tuple = ()
    fish: tuple = ()
    geometry: object = None

    @classmethod
    def for_layout(cls, layout, fish=()):
        return cls(tuple(layout.masks), tuple(fish), layout.geometry)

    def fish_covered(self, t):
        covered = set()
        for ev in self.fish:
            if ev.active(t):
                covered |= ev.covered
        return covered

    def blocks(self, tag, cam_pos, t=0.0):
        if tag.id in self.fish_covered(t):
            return True
        tag_pos = np.asarray(tag.position, dtype=float)
        for m in self.masks:
            if _segment_hits_box(cam_pos, tag_pos, np.asarray(m.box_min), np.asarray(m.box_max)):
                return True
        if self.geometry is not None and tag.face is Face.FUNNEL_INTERIOR:
            return not _through_aperture(cam_pos, tag_pos, self.geometry)
        return False


def _segment_hits_box(a, b, lo, hi):
    d = b - a
    t0, t1 = 0.0, 1.0 - 1e-6
    for k in range(3):
        if abs(d[k]) < 1e-12:
            if a[k] < lo[k] or a[k] > hi[k]:
                return False
            continue
        ta = (lo[k] - a[k]) / d[k]
        tb = (hi[k] - a[k]) / d[k]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return False
    return True


def _through_aperture(cam_pos, tag_pos, g):
    x_entry = g.entry_center[0]
    if cam_pos[0] >= x_entry:
        return g.in_entry_aperture(cam_pos[1], cam_pos[2])
    s = (x_entry - cam_pos[0]) / (tag_pos[0] - cam_pos[0])
    p = cam_pos + s * (tag_pos - cam_pos)
    return g.in_entry_aperture(p[1], p[2])


def visible(tag, camera_pose, cam, occlusions=None, t=0.0):
    """Geometric detectability of a single tag from a STATION-frame camera pose."""
    camera_pose.require(FrameId.STATION)
    c = camera_pose.position
    d = np.asarray(tag.position, dtype=float) - c
    p = camera_pose.rotation.T @ d
    if p[0] <= 0.0:
        return False
    rng_ = float(np.linalg.norm(d))
    margin = math.atan(tag.size * SQRT2 / 2 / rng_) if cam.require_full_tag else 0.0
    if abs(math.atan2(p[1], p[0])) + margin > cam.hfov / 2:
        return False
    if abs(math.atan2(p[2], p[0])) + margin > cam.vfov / 2:
        return False
    if rng_ > max_detection_range(tag, cam):
        return False
    cos_view = float(np.dot(tag.normal, -d)) / rng_
    if math.acos(max(-1.0, min(1.0, cos_view))) > cam.view_limit(tag.density):
        return False
    if occlusions is not None and occlusions.blocks(tag, c, t):
        return False
    return True


def _range_array(arr, cam):
    n = arr["density"]
    req = np.array([cam.cell_px_required(k) for k in n])
    pinhole = (arr["size"] / (n + 2)) * cam.focal_px / req
    return np.minimum(pinhole, cam.attenuation_range), req


def _camera_limits(layout, cam):
    """Per-tag detection range and view-angle limit, cached on the layout per camera."""
    cache = layout.__dict__.setdefault("_camera_limits", {})
    hit = cache.get(id(cam))
    if hit is None or hit[0] is not cam:
        arr = layout.arrays()
        max_range, _ = _range_array(arr, cam)
        limits = np.array([cam.view_limit(k) for k in arr["density"]])
        hit = cache[id(cam)] = (cam, max_range, limits)
    return hit[1], hit[2]


def visible_mask(layout, camera_pose, cam, occlusions=None, t=0.0):
    """Vectorised :func:`visible` over every tag of ``layout``."""
    camera_pose.require(FrameId.STATION)
    arr = layout.arrays()
    c = camera_pose.position
    d = arr["pos"] - c
    p = d @ camera_pose.rotation
    rng_ = np.linalg.norm(d, axis=1)
    fwd = p[:, 0] > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = np.arctan(arr["size"] * SQRT2 / 2 / rng_) if cam.require_full_tag else 0.0
        az = np.abs(np.arctan2(p[:, 1], p[:, 0])) + margin
        el = np.abs(np.arctan2(p[:, 2], p[:, 0])) + margin
        cos_view = np.einsum("ij,ij->i", arr["normal"], -d) / rng_
    max_range, limits = _camera_limits(layout, cam)
    ok = fwd & (az <= cam.hfov / 2) & (el <= cam.vfov / 2) & (rng_ <= max_range)
    ok &= np.arccos(np.clip(cos_view, -1.0, 1.0)) <= limits
    if occlusions is not None and ok.any():
        covered = occlusions.fish_covered(t)
        for i in np.flatnonzero(ok):
            tag = layout.tags[i]
            if tag.id in covered:
                ok[i] = False
                continue
            for m in occlusions.masks:
                if _segment_hits_box(c, arr["pos"][i], np.asarray(m.box_min), np.asarray(m.box_max)):
                    ok[i] = False
                    break
            if ok[i] and occlusions.geometry is not None and arr["interior"][i]:
                ok[i] = _through_aperture(c, arr["pos"][i], occlusions.geometry)
    return ok


@dataclass(frozen=True)
class MarkerDetection:
    tag_id: int
    pose: Pose  # tag pose in the camera frame
    quality: float
    range: float
    pos_std: float = 0.0
    rot_std: float = 0.0


def detect_markers(camera_pose, layout, cam, occlusions=None, rng=None, t=0.0):
    """One detection per visible tag, with range/quality-scaled pose noise.

    Noise is skipped when ``rng`` is None or the camera noise terms are zero.
    """
    mask = visible_mask(layout, camera_pose, cam, occlusions, t)
    if not mask.any():
        return []
    arr = layout.arrays()
    sel = np.flatnonzero(mask)
    d = arr["pos"][sel] - camera_pose.position
    r = np.linalg.norm(d, axis=1)
    n = arr["density"][sel]
    req = np.array([cam.cell_px_required(k) for k in n])
    cell_px = (arr["size"][sel] / (n + 2)) * cam.focal_px / r
    cos_view = -np.einsum("ij,ij->i", arr["normal"][sel], d) / r
    q = np.maximum(np.minimum(1.0, cell_px / (4 * req)) * np.maximum(cos_view, 0.0), 1e-3)
    pos_std = cam.pos_noise * r / q
    rot_std = cam.rot_noise / q
    pos = d @ camera_pose.rotation
    quat = quat_multiply_batch(quat_conjugate(camera_pose.orientation), arr["quat"][sel])
    if rng is not None and (cam.pos_noise > 0 or cam.rot_noise > 0):
        e = rng.normal(size=(len(sel), 6))
        pos = pos + e[:, :3] * pos_std[:, None]
        quat = quat_multiply_batch(quat, rotvec_to_quat_batch(e[:, 3:] * rot_std[:, None]))
    detections = []
    for k, i in enumerate(sel):
        rel = Pose(pos[k], quat[k], FrameId.CAMERA)
        detections.append(MarkerDetection(int(arr["ids"][i]), rel, float(q[k]), float(r[k]),
                                          float(pos_std[k]), float(rot_std[k])))
    return detections


def camera_pose_from_detection(det, layout):
    """STATION-frame camera pose implied by a single detection."""
    try:
        tag = layout.tag(det.tag_id)
    except KeyError:
        raise InconsistentLayoutError(f"detected tag {det.tag_id} is not in the layout") from None
    tag_in_cam = Pose(det.pose.position, det.pose.orientation, FrameId.CAMERA)
    cam = compose(tag.pose, invert(tag_in_cam))
    return Pose(cam.position, cam.orientation, FrameId.STATION, FrameId.CAMERA)


def pose_from_detections(detections, layout, cam=None, var_floor=1e-10):
    """Fuse per-tag body poses in the tag* frame by inverse-variance weighting.

    Returns ``(Pose[TAG_STAR], 6x6 covariance)`` ordered as
    ``[x, y, z, roll, pitch, yaw]``, or ``None`` without detections.
    """
    if not detections:
        return None
    cam = cam or CameraModel()
    star_inv = invert(layout.tag_star_pose)
    body_in_cam = invert(cam.mount)
    q_bc = body_in_cam.orientation
    R_s, p_s, q_s = star_inv.rotation, star_inv.position, star_inv.orientation
    arr = layout.arrays()
    try:
        sel = np.array([arr["index"][det.tag_id] for det in detections])
    except KeyError as exc:
        raise InconsistentLayoutError(f"detected tag {exc.args[0]} is not in the layout") from None
    det_pos = np.array([det.pose.position for det in detections])
    det_quat = np.array([det.pose.orientation for det in detections])
    pos_std = np.array([det.pos_std for det in detections])
    rot_std = np.array([det.rot_std for det in detections])
    ranges = np.array([det.range for det in detections])
    # camera in station = tag pose composed with the inverse detection
    q_cs = quat_multiply_batch(arr["quat"][sel], det_quat * np.array([1.0, -1.0, -1.0, -1.0]))
    R_cs = quat_to_matrix_batch(q_cs)
    p_cs = arr["pos"][sel] - np.einsum("nij,nj->ni", R_cs, det_pos)
    body_pos = p_cs + np.einsum("nij,j->ni", R_cs, body_in_cam.position)
    positions = p_s + body_pos @ R_s.T
    quats = quat_multiply_batch(q_s, quat_multiply_batch(q_cs, q_bc))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    w_pos = 1.0 / np.maximum(pos_std ** 2 + (ranges * rot_std) ** 2, var_floor)
    w_rot = 1.0 / np.maximum(rot_std ** 2, var_floor)
    pos = w_pos @ positions / w_pos.sum()
    signs = np.where(quats @ quats[0] >= 0, 1.0, -1.0)
    q = quat_normalize((w_rot * signs) @ quats)
    cov = np.diag([1.0 / w_pos.sum()] * 3 + [1.0 / w_rot.sum()] * 3)
    return Pose(pos, q, FrameId.TAG_STAR, FrameId.BODY), cov
