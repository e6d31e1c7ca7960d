import copy

import numpy as np
import pytest

from residock.errors import LayoutValidationError
from residock.layout import (OUTER_FACES, Face, default_layout, dump_layout, layout_to_document, load_layout,
                             normalize_layout_document, validate_layout)
from residock.sensors import FishEvent, Occlusions
from residock.study import coverage_map, survey_path

LAYOUT = default_layout()
DOC = layout_to_document(LAYOUT)


def broken(mutate):
    doc = copy.deepcopy(DOC)
    mutate(doc)
    with pytest.raises(LayoutValidationError) as info:
        load_layout(doc)
    return str(info.value)


def test_shipped_layout_shape():
    assert len(LAYOUT.tags) == 21
    assert sorted(LAYOUT.ids) == list(range(21))
    assert LAYOUT.tag_star_id == 0
    assert LAYOUT.tag_star_pose.position == pytest.approx([-0.5, 0.0, -0.875])
    assert validate_layout(LAYOUT) == []
    assert {t.face for t in LAYOUT.tags} == set(Face)
    for face in OUTER_FACES:
        assert any(t.face is face and t.size == 0.22 for t in LAYOUT.tags)


def test_funnel_denser_than_outer_faces():
    funnel = LAYOUT.face_density(Face.FUNNEL_INTERIOR)
    for face in OUTER_FACES:
        assert funnel > LAYOUT.face_density(face)


def test_tags_face_outward():
    g = LAYOUT.geometry
    for t in LAYOUT.tags:
        assert float(np.dot(t.normal, g.face_normal(t.face))) == pytest.approx(1.0, abs=1e-6)
        assert g.surface_distance(t.face, t.position) <= 0.02


def test_duplicate_id_rejected():
    msg = broken(lambda d: d["tags"].append(dict(d["tags"][3])))
    assert "duplicate tag id 3" in msg


def test_floating_tag_rejected():
    def lift(d):
        d["tags"][5]["position"][0] -= 0.1
    assert "off the" in broken(lift)


def test_other_rules_rejected():
    assert "palette" in broken(lambda d: d["tags"][1].update(size=0.3))
    assert "density" in broken(lambda d: d["tags"][1].update(density=8))
    assert "tag_star" in broken(lambda d: d.update(tag_star=99))
    assert "unknown" in broken(lambda d: d.update(extra=1))
    assert "schema_version" in broken(lambda d: d.update(schema_version=2))
    assert "outward" in broken(lambda d: d["tags"][1].update(orientation=[1.0, 0.0, 0.0, 0.0]))


def test_every_violation_reported_at_once():
    def many(d):
        d["tags"][1]["size"] = 0.3
        d["tags"][2]["density"] = 9
    with pytest.raises(LayoutValidationError) as info:
        doc = copy.deepcopy(DOC)
        many(doc)
        load_layout(doc)
    assert len(info.value.args[0]) >= 2


def test_round_trip_and_normalisation():
    again = load_layout(dump_layout(LAYOUT))
    assert layout_to_document(again) == DOC
    shuffled = copy.deepcopy(DOC)
    shuffled["tags"].reverse()
    for td in shuffled["tags"]:
        td.pop("orientation")
    assert normalize_layout_document(shuffled) == DOC
    assert normalize_layout_document(normalize_layout_document(shuffled)) == DOC


def test_load_from_file(tmp_path):
    path = tmp_path / "layout.yaml"
    path.write_text(dump_layout(LAYOUT))
    assert layout_to_document(load_layout(path)) == DOC
    assert layout_to_document(load_layout(str(path))) == DOC


# --------------------------------------------------------------------------
# coverage
# --------------------------------------------------------------------------

POSES, LABELS = survey_path(LAYOUT.geometry)


def test_coverage_deterministic():
    a = coverage_map(POSES, LAYOUT)
    b = coverage_map(POSES, LAYOUT)
    assert np.array_equal(a, b)
    assert a.max() <= len(LAYOUT.tags)
    assert set(LABELS) == {"front", "right", "rear", "left"}


def test_coverage_zero_when_every_tag_hidden():
    occ = Occlusions.for_layout(LAYOUT, (FishEvent(0.0, 1e9, frozenset(LAYOUT.ids)),))
    assert coverage_map(POSES, LAYOUT, occlusions=occ).sum() == 0


def test_coverage_monotone_in_occlusion():
    full = coverage_map(POSES, LAYOUT)
    half = Occlusions.for_layout(LAYOUT, (FishEvent(0.0, 1e9, frozenset(range(0, 21, 2))),))
    assert np.all(coverage_map(POSES, LAYOUT, occlusions=half) <= full)
