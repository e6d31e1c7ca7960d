import math

import numpy as np
import pytest

from residock.errors import NonFiniteStateError, SingularInnovationError
from residock.estimation import (N_STATES, YAW, Depth, Dvl, Ekf, EkfConfig, Imu, MarkerPose, UsblPosition,
                                 derive_vertical_offset, nees, predict, propagate, update)
from residock.geometry import FrameId, wrap_angle

CFG = EkfConfig()


def spd(P):
    return np.allclose(P, P.T, atol=1e-9) and np.linalg.eigvalsh(P)[0] > 1e-12


# --------------------------------------------------------------------------
# predict
# --------------------------------------------------------------------------

def test_predict_at_rest():
    x = np.zeros(N_STATES)
    x[:3] = (1.0, -2.0, 3.0)
    P = CFG.initial_covariance()
    x1, P1 = predict(x, P, 0.3, CFG)
    assert np.array_equal(x1[:3], x[:3])
    assert np.trace(P1) > np.trace(P)


def test_predict_surge_kinematics():
    f = Ekf(CFG)
    x = np.zeros(N_STATES)
    x[6] = 1.0
    f.reset(x, 0.0)
    f.predict_to(1.0)
    assert f.position == pytest.approx([1.0, 0.0, 0.0], abs=1e-12)
    x[YAW] = math.pi / 2
    f.reset(x, 0.0)
    f.predict_to(1.0)
    assert f.position == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)


def test_predict_constant_acceleration():
    x = np.zeros(N_STATES)
    x[12] = 0.2
    x1, _ = predict(x, CFG.initial_covariance(), 0.5, CFG)
    assert x1[0] == pytest.approx(0.5 * 0.2 * 0.25)
    assert x1[6] == pytest.approx(0.1)


@pytest.mark.parametrize("seed", range(10))
def test_predict_only_trace_monotone(seed):
    # level attitude, as for the passively stable vehicle; arbitrary roll/pitch
    # rates make the Euler-rate Jacobian contracting and the property fails
    rng = np.random.default_rng(seed)
    x = rng.normal(size=N_STATES) * 0.3
    x[[3, 4, 9, 10]] = 0.0
    P = CFG.initial_covariance()
    trace = np.trace(P)
    for _ in range(100):
        x, P = predict(x, P, float(rng.uniform(0.01, 0.5)), CFG)
        assert np.trace(P) >= trace - 1e-12
        trace = np.trace(P)
        assert spd(P)


def test_predict_rejects_bad_input():
    with pytest.raises(ValueError):
        predict(np.zeros(N_STATES), np.eye(N_STATES), 0.6)
    x = np.zeros(N_STATES)
    x[2] = np.nan
    with pytest.raises(NonFiniteStateError):
        predict(x, np.eye(N_STATES), 0.1)


# --------------------------------------------------------------------------
# update
# --------------------------------------------------------------------------

def test_confident_marker_pins_the_pose():
    cfg = EkfConfig(marker_floor_std=1e-9)
    z = np.array([1.0, 0.5, -0.2, 0.01, -0.02, 0.7])
    x, P, _ = update(np.zeros(N_STATES), cfg.initial_covariance(), MarkerPose(z, np.eye(6) * 1e-14, 0.0), cfg)
    assert x[:6] == pytest.approx(z, abs=1e-6)


def test_update_with_predicted_measurement_is_neutral():
    rng = np.random.default_rng(1)
    x = rng.normal(size=N_STATES) * 0.2
    P = CFG.initial_covariance()
    for pkt in (MarkerPose(x[:6], np.eye(6) * 1e-3, 0.0), Dvl(x[6:9], 0.0), Depth(x[2], 0.0),
                UsblPosition(x[0], x[1], 0.0), Imu(x[9:12], x[12:15], 0.0, heading=x[YAW])):
        x1, P1, stats = update(x, P, pkt, CFG)
        assert np.allclose(x1, x, atol=1e-15)
        assert np.trace(P1) <= np.trace(P)
        assert stats.nis == pytest.approx(0.0, abs=1e-20)


def test_heading_update_across_seam():
    cfg = EkfConfig(marker_floor_std=1e-9)
    x = np.zeros(N_STATES)
    x[YAW] = math.radians(179.0)
    z = np.zeros(6)
    z[5] = math.radians(-179.0)
    x1, _, stats = update(x, cfg.initial_covariance(), MarkerPose(z, np.eye(6) * 1e-14, 0.0), cfg)
    assert abs(stats.innovation[5]) == pytest.approx(math.radians(2.0), abs=1e-9)
    assert wrap_angle(x1[YAW] - x[YAW]) == pytest.approx(math.radians(2.0), abs=1e-6)
    assert -math.pi < x1[YAW] <= math.pi


def test_compass_skipped_when_disabled():
    cfg = EkfConfig(compass_enabled=False)
    x = np.zeros(N_STATES)
    P = cfg.initial_covariance()
    a = update(x, P, Imu(np.zeros(3), np.zeros(3), 0.0, heading=1.0), cfg)
    b = update(x, P, Imu(np.zeros(3), np.zeros(3), 0.0), cfg)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    c = update(x, P, Imu(np.zeros(3), np.zeros(3), 0.0, heading=1.0), EkfConfig())
    assert c[0][YAW] > 0.5


def test_singular_innovation():
    P = np.zeros((N_STATES, N_STATES))
    with pytest.raises(SingularInnovationError):
        update(np.zeros(N_STATES), P, Dvl(np.zeros(3), 0.0, cov=np.zeros((3, 3))), CFG)


def test_joint_update_matches_sequential():
    rng = np.random.default_rng(2)
    x = rng.normal(size=N_STATES) * 0.1
    P = CFG.initial_covariance()
    packets = [MarkerPose(rng.normal(size=6) * 0.1, np.eye(6) * 1e-4, 1.0), Dvl(rng.normal(size=3) * 0.1, 1.0),
               Depth(0.3, 1.0)]
    xj, Pj, stats = update(x, P, packets, CFG)
    xs, Ps = x, P
    for p in packets:
        xs, Ps, _ = update(xs, Ps, p, CFG)
    assert np.allclose(xj, xs, atol=1e-10)
    assert np.allclose(Pj, Ps, atol=1e-12)
    assert len(stats.indices) == 10  # z observed twice


def test_ekf_drops_out_of_sequence_packets():
    f = Ekf(CFG)
    f.update(Dvl(np.zeros(3), 1.0))
    state = f.state.copy()
    assert f.update(Dvl(np.ones(3), 0.5)) is None
    assert f.dropped == 1
    assert np.array_equal(f.state, state)
    with pytest.raises(ValueError):
        f.update([Dvl(np.zeros(3), 2.0), Depth(0.0, 2.1)])


def test_covariance_spd_over_many_operations():
    rng = np.random.default_rng(3)
    cfg = EkfConfig()
    truth = np.zeros(N_STATES)
    x = truth.copy()
    P = cfg.initial_covariance()
    worst = math.inf
    ops = 0
    while ops < 100_000:
        dt = float(rng.uniform(0.01, 0.2))
        # level truth with a bounded random acceleration and yaw rate
        truth[12:14] = np.clip(truth[12:14] + rng.normal(size=2) * 0.01, -0.05, 0.05)
        truth[11] = float(np.clip(truth[11] + rng.normal() * 0.01, -0.2, 0.2))
        truth[6:8] = np.clip(truth[6:8], -0.5, 0.5)
        truth = propagate(truth, dt)
        x, P = predict(x, P, dt, cfg)
        kind = rng.integers(5)
        if kind == 0:
            pkt = MarkerPose(truth[:6] + rng.normal(size=6) * 0.01, np.eye(6) * 10 ** rng.uniform(-8, -2), 0.0)
        elif kind == 1:
            pkt = Dvl(truth[6:9] + rng.normal(size=3) * 0.01, 0.0)
        elif kind == 2:
            pkt = Imu(truth[9:12], truth[12:15], 0.0, heading=float(truth[YAW] + rng.normal() * 0.03))
        elif kind == 3:
            pkt = Depth(truth[2] + rng.normal() * 0.02, 0.0)
        else:
            pkt = UsblPosition(truth[0] + rng.normal(), truth[1] + rng.normal(), 0.0)
        x, P, _ = update(x, P, pkt, cfg)
        ops += 2
        if ops % 100 == 0:
            worst = min(worst, float(np.linalg.eigvalsh(P)[0]))
            assert np.allclose(P, P.T, atol=1e-9)
    assert worst > 1e-12


# --------------------------------------------------------------------------
# nees and vertical offset
# --------------------------------------------------------------------------

def test_nees_examples():
    P = np.eye(N_STATES)
    x = np.zeros(N_STATES)
    assert nees(x, P, x) == 0.0
    e = x.copy()
    e[4] = 1.0
    assert nees(e, P, x) == pytest.approx(1.0)
    a, b = x.copy(), x.copy()
    a[YAW], b[YAW] = math.radians(179), math.radians(-179)
    assert nees(a, P, b) == pytest.approx(math.radians(2) ** 2)
    assert nees(e, P, x, indices=[0, 1, 2]) == 0.0


@pytest.mark.parametrize("rov, station, expected", [(5.0, 90.0, 85.0), (40.0, 40.0, 0.0), (90.0, 90.0, 0.0)])
def test_vertical_offset(rov, station, expected):
    assert derive_vertical_offset(rov, station) == expected


def test_vertical_offset_rejects_negative_depth():
    with pytest.raises(ValueError):
        derive_vertical_offset(-1.0, 90.0)


# --------------------------------------------------------------------------
# closed filter properties
# --------------------------------------------------------------------------

def _moving_truth(t):
    x = np.zeros(N_STATES)
    x[:3] = (0.1 * t, 0.05 * t, 0.0)
    x[6:8] = (0.1, 0.05)
    return x


def test_noiseless_convergence_from_half_metre_offset():
    f = Ekf(EkfConfig())
    x0 = _moving_truth(0.0)
    x0[:3] += np.array([0.5, 0.0, 0.0])
    f.reset(x0, 0.0)
    err = []
    for k in range(1, 51):
        t = 0.2 * k
        truth = _moving_truth(t)
        f.update([MarkerPose(truth[:6], np.zeros((6, 6)), t), Dvl(truth[6:9], t)])
        err.append(np.linalg.norm(f.position - truth[:3]))
    assert err[-1] < 0.01
    assert max(err[25:]) < 0.01


def test_compass_exclusion_bit_identical():
    def run(with_compass):
        f = Ekf(EkfConfig(compass_enabled=False))
        rng = np.random.default_rng(4)
        drift = 0.0
        for k in range(1, 200):
            t = 0.1 * k
            drift += math.radians(0.5 / 60) * 0.1
            z = rng.normal(size=6) * 0.01
            heading = float(rng.normal() * 0.05 + drift)
            f.update(Imu(z[:3], z[3:], t, heading=heading if with_compass else None))
            if k % 2 == 0:
                f.update(Dvl(rng.normal(size=3) * 0.01, t))
        return f.state, f.cov

    a, b = run(True), run(False)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_propagate_pure():
    x = np.arange(N_STATES, dtype=float) * 0.01
    assert np.array_equal(propagate(x, 0.1), propagate(x.copy(), 0.1))
    assert Ekf().frame is FrameId.TAG_STAR
