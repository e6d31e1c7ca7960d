"""
Marker layout registry.

A layout document is a YAML/JSON mapping::

    schema_version: 1
    station: {width, height, depth, entry: {center, half_width, half_height},
              dock_point, dock_heading, funnel_back, usbl_head}
    tag_star: <id of the main tag above the entry>
    tags: [{id, size, density, position, orientation?, face}, ...]
    occlusion_masks: [{name, min, max}, ...]

Positions are metres in the station frame, orientations ``[w, x, y, z]``
quaternions mapping the tag frame (x right, y up, z out of the tag) into
the station frame.  When ``orientation`` is omitted it is derived from the
face.  See ``docs/schemas.md`` for the full field reference.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import LayoutValidationError
from .geometry import FrameId, Pose, matrix_to_quat, quat_to_matrix

LAYOUT_SCHEMA_VERSION = 1
SIZE_PALETTE = (0.07, 0.15, 0.22, 0.25)
DENSITIES = (4, 5, 6, 7)
MAX_TAG_ID = 20
SURFACE_TOL = 0.02


class Face(str, enum.Enum):
    FRONT = "FRONT"
    LEFT = "LEFT"
    RIGHT = "RIGHT"
    REAR = "REAR"
    FUNNEL_INTERIOR = "FUNNEL_INTERIOR"


OUTER_FACES = (Face.FRONT, Face.LEFT, Face.RIGHT, Face.REAR)


@dataclass(frozen=True)
class StationGeometry:
    """Box of ``depth`` x ``width`` x ``height`` centred on the station origin."""

    width: float = 2.0
    height: float = 2.0
    depth: float = 1.0
    entry_center: tuple = (-0.5, 0.0, -0.525)
    entry_half_width: float = 0.35
    entry_half_height: float = 0.225
    dock_point: tuple = (0.05, 0.0, -0.525)
    dock_heading: float = 0.0
    funnel_back: float = 0.35
    usbl_head: tuple = (-0.4, 0.0, -1.0)

    @property
    def box_min(self):
        return np.array([-self.depth / 2, -self.width / 2, -self.height / 2])

    @property
    def box_max(self):
        return np.array([self.depth / 2, self.width / 2, self.height / 2])

    def face_normal(self, face):
        return {
            Face.FRONT: np.array([-1.0, 0.0, 0.0]),
            Face.REAR: np.array([1.0, 0.0, 0.0]),
            Face.LEFT: np.array([0.0, -1.0, 0.0]),
            Face.RIGHT: np.array([0.0, 1.0, 0.0]),
            Face.FUNNEL_INTERIOR: np.array([-1.0, 0.0, 0.0]),
        }[Face(face)]

    def face_center(self, face):
        face = Face(face)
        if face is Face.FUNNEL_INTERIOR:
            c = np.array(self.entry_center, dtype=float)
            c[0] = self.funnel_back
            return c
        half = self.box_max
        return self.face_normal(face) * half

    def face_area(self, face):
        face = Face(face)
        entry = 4 * self.entry_half_width * self.entry_half_height
        if face is Face.FUNNEL_INTERIOR:
            return entry
        if face is Face.FRONT:
            return self.width * self.height - entry
        if face is Face.REAR:
            return self.width * self.height
        return self.depth * self.height

    def surface_distance(self, face, point):
        """Distance from ``point`` to the (bounded) surface of ``face``."""
        face = Face(face)
        p = np.asarray(point, dtype=float)
        lo, hi = self.box_min, self.box_max
        if face is Face.FUNNEL_INTERIOR:
            e = np.asarray(self.entry_center)
            lo = np.array([self.funnel_back, e[1] - self.entry_half_width, e[2] - self.entry_half_height])
            hi = np.array([self.funnel_back, e[1] + self.entry_half_width, e[2] + self.entry_half_height])
        else:
            n = self.face_normal(face)
            axis = int(np.argmax(np.abs(n)))
            plane = hi[axis] if n[axis] > 0 else lo[axis]
            lo, hi = lo.copy(), hi.copy()
            lo[axis] = hi[axis] = plane
        return float(np.linalg.norm(p - np.clip(p, lo, hi)))

    def in_entry_aperture(self, y, z):
        e = self.entry_center
        return abs(y - e[1]) <= self.entry_half_width and abs(z - e[2]) <= self.entry_half_height


def face_orientation(normal):
    """Tag-to-station rotation for a tag whose outward normal is ``normal``."""
    z = np.asarray(normal, dtype=float)
    down = np.array([0.0, 0.0, 1.0])
    x = np.cross(z, down)  # right as seen by a viewer facing the tag
    if np.linalg.norm(x) < 1e-9:
        x = np.array([0.0, 1.0, 0.0])
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return matrix_to_quat(np.column_stack([x, y, z]))


@dataclass(frozen=True)
class TagSpec:
    id: int
    size: float
    density: int
    position: tuple
    orientation: tuple
    face: Face

    @property
    def pose(self):
        return Pose(self.position, self.orientation, FrameId.STATION)

    @property
    def normal(self):
        return quat_to_matrix(np.asarray(self.orientation))[:, 2]


@dataclass(frozen=True)
class EquipmentMask:
    """Axis-aligned box (station frame) that blocks lines of sight."""

    name: str
    box_min: tuple
    box_max: tuple


@dataclass(frozen=True)
class MarkerLayout:
    tags: tuple
    geometry: StationGeometry = field(default_factory=StationGeometry)
    tag_star_id: int = 0
    masks: tuple = ()

    def tag(self, tag_id):
        for t in self.tags:
            if t.id == tag_id:
                return t
        raise KeyError(tag_id)

    @property
    def ids(self):
        return [t.id for t in self.tags]

    @property
    def tag_star_pose(self):
        """STATION -> TAG_STAR transform (axes aligned with the station)."""
        return Pose(self.tag(self.tag_star_id).position, frame=FrameId.STATION, child=FrameId.TAG_STAR)

    def face_density(self, face):
        n = sum(1 for t in self.tags if t.face is Face(face))
        return n / self.geometry.face_area(face)

    def arrays(self):
        """Stacked tag data for vectorised visibility tests (cached)."""
        cache = self.__dict__.get("_arrays")
        if cache is None:
            cache = {
                "ids": np.array([t.id for t in self.tags]),
                "pos": np.array([t.position for t in self.tags], dtype=float),
                "normal": np.array([t.normal for t in self.tags]),
                "quat": np.array([t.orientation for t in self.tags], dtype=float),
                "index": {t.id: i for i, t in enumerate(self.tags)},
                "size": np.array([t.size for t in self.tags]),
                "density": np.array([t.density for t in self.tags]),
                "interior": np.array([t.face is Face.FUNNEL_INTERIOR for t in self.tags]),
            }
            object.__setattr__(self, "_arrays", cache)
        return cache


# ----------------------------------------------------------------------------
# Loading / validation / serialisation
# ----------------------------------------------------------------------------

_STATION_KEYS = {"width", "height", "depth", "entry", "dock_point", "dock_heading", "funnel_back", "usbl_head"}
_TAG_KEYS = {"id", "size", "density", "position", "orientation", "face"}
_TOP_KEYS = {"schema_version", "station", "tag_star", "tags", "occlusion_masks"}


def _geometry_from_doc(st, problems):
    unknown = set(st) - _STATION_KEYS
    if unknown:
        problems.append(f"unknown station keys: {sorted(unknown)}")
    entry = st.get("entry", {})
    g = StationGeometry()
    try:
        g = StationGeometry(
            width=float(st.get("width", g.width)),
            height=float(st.get("height", g.height)),
            depth=float(st.get("depth", g.depth)),
            entry_center=tuple(float(v) for v in entry.get("center", g.entry_center)),
            entry_half_width=float(entry.get("half_width", g.entry_half_width)),
            entry_half_height=float(entry.get("half_height", g.entry_half_height)),
            dock_point=tuple(float(v) for v in st.get("dock_point", g.dock_point)),
            dock_heading=float(st.get("dock_heading", g.dock_heading)),
            funnel_back=float(st.get("funnel_back", g.funnel_back)),
            usbl_head=tuple(float(v) for v in st.get("usbl_head", g.usbl_head)),
        )
    except (TypeError, ValueError) as exc:
        problems.append(f"bad station block: {exc}")
    return g


def load_layout(document):
    """Build and validate a :class:`MarkerLayout` from a mapping, path or YAML string.

    Raises :class:`LayoutValidationError` listing every violated rule.
    """
    doc = _read_document(document)
    problems = []
    if doc.get("schema_version") != LAYOUT_SCHEMA_VERSION:
        problems.append(f"schema_version must be {LAYOUT_SCHEMA_VERSION}")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        problems.append(f"unknown top-level keys: {sorted(unknown)}")
    geometry = _geometry_from_doc(doc.get("station", {}), problems)

    tags = []
    for i, td in enumerate(doc.get("tags", [])):
        extra = set(td) - _TAG_KEYS
        if extra:
            problems.append(f"tag #{i}: unknown keys {sorted(extra)}")
        try:
            face = Face(td["face"])
            pos = tuple(float(v) for v in td["position"])
            if "orientation" in td and td["orientation"] is not None:
                q = np.asarray(td["orientation"], dtype=float)
                q = q / np.linalg.norm(q)
            else:
                q = face_orientation(geometry.face_normal(face))
            tags.append(TagSpec(int(td["id"]), float(td["size"]), int(td["density"]), pos, tuple(q), face))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"tag #{i}: malformed ({exc})")

    masks = []
    for i, md in enumerate(doc.get("occlusion_masks", []) or []):
        try:
            masks.append(EquipmentMask(str(md["name"]), tuple(map(float, md["min"])), tuple(map(float, md["max"]))))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"occlusion mask #{i}: malformed ({exc})")

    tag_star = doc.get("tag_star")
    layout = MarkerLayout(tuple(tags), geometry, tag_star if isinstance(tag_star, int) else -1, tuple(masks))
    problems.extend(validate_layout(layout))
    if problems:
        raise LayoutValidationError(problems)
    return layout


def validate_layout(layout):
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    g = layout.geometry
    ids = [t.id for t in layout.tags]
    seen = set()
    for i in ids:
        if i in seen:
            problems.append(f"duplicate tag id {i}")
        seen.add(i)
    if layout.tag_star_id not in seen:
        problems.append("tag_star must name exactly one tag present in the layout")
    for t in layout.tags:
        if not 0 <= t.id <= MAX_TAG_ID:
            problems.append(f"tag {t.id}: id outside 0..{MAX_TAG_ID}")
        if not any(math.isclose(t.size, s) for s in SIZE_PALETTE):
            problems.append(f"tag {t.id}: size {t.size} not in palette {SIZE_PALETTE}")
        if t.density not in DENSITIES:
            problems.append(f"tag {t.id}: bit density {t.density} not in {DENSITIES}")
        d = g.surface_distance(t.face, t.position)
        if d > SURFACE_TOL:
            problems.append(f"tag {t.id}: {d:.3f} m off the {t.face.value} surface")
        if float(np.dot(t.normal, g.face_normal(t.face))) < math.cos(math.radians(10)):
            problems.append(f"tag {t.id}: orientation does not face outward from {t.face.value}")
    for face in OUTER_FACES:
        if not any(t.face is face and math.isclose(t.size, 0.22) for t in layout.tags):
            problems.append(f"face {face.value}: needs at least one 22 cm tag")
    for m in layout.masks:
        if any(lo > hi for lo, hi in zip(m.box_min, m.box_max)):
            problems.append(f"occlusion mask {m.name}: min exceeds max")
    return problems


def _read_document(document):
    if isinstance(document, dict):
        return document
    if isinstance(document, Path) or (isinstance(document, str) and "\n" not in document and document.endswith((".yaml", ".yml", ".json"))):
        return yaml.safe_load(Path(document).read_text())
    return yaml.safe_load(document)


def _round(values, nd=9):
    return [round(float(v), nd) + 0.0 for v in values]


def layout_to_document(layout):
    g = layout.geometry
    return {
        "schema_version": LAYOUT_SCHEMA_VERSION,
        "station": {
            "width": g.width,
            "height": g.height,
            "depth": g.depth,
            "entry": {
                "center": _round(g.entry_center),
                "half_width": g.entry_half_width,
                "half_height": g.entry_half_height,
            },
            "dock_point": _round(g.dock_point),
            "dock_heading": g.dock_heading,
            "funnel_back": g.funnel_back,
            "usbl_head": _round(g.usbl_head),
        },
        "tag_star": layout.tag_star_id,
        "tags": [
            {
                "id": t.id,
                "size": t.size,
                "density": t.density,
                "position": _round(t.position),
                "orientation": _round(t.orientation),
                "face": t.face.value,
            }
            for t in sorted(layout.tags, key=lambda t: t.id)
        ],
        "occlusion_masks": [
            {"name": m.name, "min": _round(m.box_min), "max": _round(m.box_max)} for m in layout.masks
        ],
    }


def normalize_layout_document(doc):
    """Canonical form of a layout document: defaults filled, tags sorted by id."""
    return layout_to_document(load_layout(doc))


def dump_layout(layout):
    return yaml.safe_dump(layout_to_document(layout), sort_keys=False)


def default_layout():
    """The shipped deep-site layout (reconstructed tag poses)."""
    text = resources.files("residock.data").joinpath("default_layout.yaml").read_text()
    return load_layout(text)
