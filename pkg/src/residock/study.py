"""
Layout design studies: detection-count coverage along a survey path and the
bit-pattern density comparison.  Both are noise-free and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import FrameId, Pose
from .layout import DENSITIES, Face, MarkerLayout, StationGeometry, TagSpec, face_orientation
from .sensors import CameraModel, Occlusions, visible, visible_mask


def coverage_map(path, layout, cam=None, occlusions=None, times=None):
    """Number of visible tags at each STATION-frame camera pose of ``path``."""
    cam = cam or CameraModel()
    if occlusions is None:
        occlusions = Occlusions.for_layout(layout)
    counts = np.zeros(len(path), dtype=int)
    for k, pose in enumerate(path):
        t = 0.0 if times is None else times[k]
        counts[k] = int(visible_mask(layout, pose, cam, occlusions, t).sum())
    return counts


def _look_at(position, target):
    d = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    return math.atan2(d[1], d[0])


def survey_path(geometry=None, stand_off=1.5, step=0.1, depth=None, exit_distance=0.7):
    """Manual-style survey: back out of the funnel, then circle the station facing it.

    Returns ``(camera poses in STATION, segment labels)``; labels are
    ``front``, ``right``, ``rear`` and ``left``.
    """
    g = geometry or StationGeometry()
    bmin, bmax = g.box_min, g.box_max
    z = g.entry_center[2] if depth is None else depth
    poses, labels = [], []

    def add(p, yaw, label):
        cam = Pose.from_euler(p, 0.0, 0.0, yaw, FrameId.STATION, FrameId.CAMERA)
        poses.append(cam)
        labels.append(label)

    # straight back-out along the entry axis, facing the station
    x0 = bmin[0] - exit_distance
    fx = bmin[0] - stand_off
    for x in np.arange(x0, fx - 1e-9, -step):
        add((x, g.entry_center[1], z), 0.0, "front")

    # rounded rectangle around the box, camera aimed at the box centre
    lat = bmax[1] + stand_off
    rx = bmax[0] + stand_off
    corners = [(fx, 0.0), (fx, lat), (rx, lat), (rx, -lat), (fx, -lat), (fx, 0.0)]
    for (ax, ay), (bx, by) in zip(corners, corners[1:]):
        n = max(int(math.hypot(bx - ax, by - ay) / step), 1)
        for s in np.linspace(0.0, 1.0, n, endpoint=False):
            p = np.array([ax + s * (bx - ax), ay + s * (by - ay), z])
            label = _segment(p, bmin, bmax)
            add(p, _look_at(p, (0.0, 0.0, z)), label)
    return poses, labels


def _segment(p, bmin, bmax):
    if p[0] < bmin[0] and abs(p[1]) <= bmax[1]:
        return "front"
    if p[0] > bmax[0]:
        return "rear"
    return "right" if p[1] > 0 else "left"


def segment_means(counts, labels):
    out = {}
    for lab in dict.fromkeys(labels):
        sel = [c for c, l in zip(counts, labels) if l == lab]
        out[lab] = float(np.mean(sel))
    return out


# ----------------------------------------------------------------------------
# Bit-pattern comparison
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class BitPatternResult:
    size: float
    density: int
    max_range: float
    detection_rate: float
    max_view_angle: float


def _single_tag_layout(size, density):
    normal = np.array([-1.0, 0.0, 0.0])
    tag = TagSpec(0, size, density, np.zeros(3), face_orientation(normal), Face.FRONT)
    return MarkerLayout((tag,), StationGeometry(), 0, ())


def approach_path(distances=None, off_axis=math.radians(30.0)):
    """Camera poses closing on a tag at the origin along a fixed oblique bearing.

    The tag faces -x; each pose looks straight at the tag centre.
    """
    if distances is None:
        distances = np.arange(12.0, 0.45, -0.05)
    poses = []
    for d in distances:
        p = np.array([-d * math.cos(off_axis), d * math.sin(off_axis), 0.0])
        poses.append(Pose.from_euler(p, 0.0, 0.0, _look_at(p, np.zeros(3)), FrameId.STATION, FrameId.CAMERA))
    return poses


def _measured_range(tag, cam, hi=50.0):
    """Largest head-on distance at which ``visible`` holds (bisection)."""
    def ok(d):
        pose = Pose.from_euler((-d, 0.0, 0.0), 0.0, 0.0, 0.0, FrameId.STATION, FrameId.CAMERA)
        return visible(tag, pose, cam)
    start = next((d for d in np.arange(0.1, hi, 0.1) if ok(d)), None)
    if start is None:
        return 0.0
    lo = float(start)
    while hi - lo > 1e-4:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def _measured_angle(tag, cam, distance=1.0, step=math.radians(0.25)):
    """Largest off-normal viewing angle still detected at ``distance``."""
    best = 0.0
    for a in np.arange(0.0, math.pi / 2, step):
        p = np.array([-distance * math.cos(a), distance * math.sin(a), 0.0])
        pose = Pose.from_euler(p, 0.0, 0.0, _look_at(p, np.zeros(3)), FrameId.STATION, FrameId.CAMERA)
        if visible(tag, pose, cam):
            best = float(a)
    return best


def compare_bit_patterns(sizes=(0.22,), densities=DENSITIES, cam=None, path=None):
    """Per-(size, density) range, detection rate along ``path`` and widest viewing angle."""
    cam = cam or CameraModel()
    if not set(densities) <= set(DENSITIES):
        raise ValueError(f"densities must be a subset of {DENSITIES}")
    path = approach_path() if path is None else path
    results = []
    for size in sizes:
        for n in densities:
            layout = _single_tag_layout(size, n)
            tag = layout.tags[0]
            rate = float(np.mean([visible(tag, pose, cam) for pose in path]))
            results.append(BitPatternResult(size, int(n), _measured_range(tag, cam), rate,
                                            _measured_angle(tag, cam)))
    return results


def ranking(results, key):
    """Densities ordered best-first by ``key`` (ties keep density order)."""
    return [r.density for r in sorted(results, key=lambda r: -getattr(r, key))]


def format_report(results):
    lines = [f"{'size_m':>7} {'bits':>5} {'range_m':>8} {'rate':>6} {'angle_deg':>9}"]
    for r in results:
        lines.append(f"{r.size:7.2f} {r.density}x{r.density:<3} {r.max_range:8.2f} {r.detection_rate:6.3f} "
                     f"{math.degrees(r.max_view_angle):9.1f}")
    return "\n".join(lines)

