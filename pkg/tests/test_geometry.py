import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from residock.errors import FrameMismatchError
from residock.geometry import (FrameId, Pose, compose, euler_to_quat, invert, matrix_to_quat, quat_to_euler,
                               quat_to_matrix, wrap_angle)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def random_pose(rng, frame=FrameId.WORLD_NED):
    q = rng.normal(size=4)
    return Pose(rng.uniform(-10, 10, 3), q / np.linalg.norm(q), frame, frame)


def assert_identity(p, tol=1e-9):
    assert np.allclose(p.position, 0.0, atol=tol)
    assert np.allclose(p.rotation, np.eye(3), atol=tol)


def test_identity_compose():
    p = random_pose(np.random.default_rng(1))
    out = compose(Pose.identity(), p)
    assert np.allclose(out.position, p.position)
    assert np.allclose(out.rotation, p.rotation)


def test_compose_with_inverse_is_identity():
    p = random_pose(np.random.default_rng(2))
    assert_identity(compose(p, invert(p)))
    assert_identity(compose(invert(p), p))


def test_compose_translate_yaw_translate():
    t = Pose((1.0, 0.0, 0.0))
    yaw = Pose.from_euler((0.0, 0.0, 0.0), yaw=math.pi / 2)
    out = compose(compose(t, yaw), t)
    # yaw +90 deg turns North into East
    assert out.position == pytest.approx([1.0, 1.0, 0.0], abs=1e-12)


def test_invert_identity_and_translation():
    assert_identity(invert(Pose.identity()))
    inv = invert(Pose((1.0, 2.0, 3.0)))
    assert inv.position == pytest.approx([-1.0, -2.0, -3.0])
    assert np.allclose(inv.rotation, np.eye(3))


def test_compose_associative():
    rng = np.random.default_rng(3)
    a, b, c = (random_pose(rng) for _ in range(3))
    left, right = compose(compose(a, b), c), compose(a, compose(b, c))
    assert np.allclose(left.position, right.position, atol=1e-12)
    assert np.allclose(left.rotation, right.rotation, atol=1e-12)


def test_round_trip_ten_thousand_seeded_poses():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(10_000):
        p = random_pose(rng)
        e = compose(p, invert(p))
        worst = max(worst, float(np.max(np.abs(e.position))), float(np.max(np.abs(e.rotation - np.eye(3)))))
    assert worst < 1e-9


def test_orientation_renormalised():
    p = Pose((0, 0, 0), (2.0, 0.0, 0.0, 0.0))
    assert np.linalg.norm(p.orientation) == pytest.approx(1.0, abs=1e-12)
    c = compose(random_pose(np.random.default_rng(5)), random_pose(np.random.default_rng(6)))
    assert abs(np.linalg.norm(c.orientation) - 1.0) < 1e-9


@pytest.mark.parametrize("a, expected", [(0.0, 0.0), (2 * math.pi, 0.0), (3.5 * math.pi, -0.5 * math.pi),
                                         (math.pi, math.pi), (-math.pi, math.pi)])
def test_wrap_angle_examples(a, expected):
    assert wrap_angle(a) == pytest.approx(expected, abs=1e-12)


@given(finite)
def test_wrap_angle_range_and_idempotent(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert wrap_angle(w) == w
    assert math.isclose(math.remainder(a - w, 2 * math.pi), 0.0, abs_tol=1e-9)


def test_wrap_angle_array():
    out = wrap_angle(np.array([0.0, 2 * math.pi, 3.5 * math.pi]))
    assert out == pytest.approx([0.0, 0.0, -0.5 * math.pi], abs=1e-12)


@settings(max_examples=300)
@given(st.floats(-math.pi, math.pi), st.floats(-math.radians(85), math.radians(85)), st.floats(-math.pi, math.pi))
def test_euler_quaternion_round_trip(roll, pitch, yaw):
    r, p, y = quat_to_euler(euler_to_quat(roll, pitch, yaw))
    assert abs(wrap_angle(y - yaw)) < 1e-9
    assert abs(p - pitch) < 1e-9
    assert abs(wrap_angle(r - roll)) < 1e-9


def test_euler_accessor_range():
    p = Pose.from_euler((0, 0, 0), yaw=math.pi)
    assert -math.pi < p.yaw <= math.pi
    assert p.yaw == pytest.approx(math.pi)


def test_matrix_quaternion_round_trip():
    rng = np.random.default_rng(7)
    for _ in range(100):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        R = quat_to_matrix(q)
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.allclose(quat_to_matrix(matrix_to_quat(R)), R, atol=1e-12)


def test_frame_check_reports_mismatch():
    p = Pose((0, 0, 0), frame=FrameId.STATION)
    assert p.require(FrameId.STATION) is p
    with pytest.raises(FrameMismatchError):
        p.require(FrameId.TAG_STAR)


def test_compose_checks_child_frame():
    station_in_world = Pose((1, 0, 0), frame=FrameId.WORLD_NED, child=FrameId.STATION)
    tag_in_station = Pose((0, 1, 0), frame=FrameId.STATION, child=FrameId.TAG_STAR)
    out = compose(station_in_world, tag_in_station)
    assert (out.frame, out.child) == (FrameId.WORLD_NED, FrameId.TAG_STAR)
    with pytest.raises(FrameMismatchError):
        compose(station_in_world, Pose((0, 0, 0), frame=FrameId.BODY))
    inv = invert(station_in_world)
    assert (inv.frame, inv.child) == (FrameId.STATION, FrameId.WORLD_NED)
