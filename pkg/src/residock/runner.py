"""
Closed-loop trial simulation.

One :class:`Trial` owns everything for a single seeded run: truth state,
random generator, both navigation filters, guidance state and the log
sink.  Steps are fixed-size; sensors fire on integer multiples of the step.

World placement: the world NED origin sits at the sea surface directly above
the USBL head, so USBL offsets are world North/East coordinates.  The
station is unrotated, hence tag* shares the world axes.
"""

from __future__ import annotations

import math

import numpy as np

from .estimation import Depth, Dvl, Ekf, Imu, MarkerPose, UsblPosition, derive_vertical_offset
from .geometry import FrameId, Pose, compose, invert, wrap_angle
from .guidance import (
    PidState,
    Waypoint,
    build_inspection,
    build_loops,
    control,
    estimate_pose,
    select_initial_waypoint,
    waypoint_reached,
)
from .layout import default_layout, load_layout
from .mission import (
    LEGAL_TRANSITIONS,
    AbortReason,
    ActionKind,
    MissionInputs,
    MissionPhase,
    TrialResult,
    homing_target,
    tick,
)
from .sensors import (
    DepthParams,
    DvlParams,
    FishEvent,
    ImuBias,
    ImuParams,
    Occlusions,
    UsblParams,
    detect_markers,
    generate_fish_schedule,
    pose_from_detections,
    sample_depth,
    sample_dvl,
    sample_imu,
    sample_usbl,
)
from .vehicle import (
    CurrentField,
    LatchState,
    ThrustCommand,
    VehicleState,
    engage_latch,
    latch_check,
    station_contact,
    step,
)

Ph = MissionPhase
HOMING_PHASES = (Ph.SURFACE_TRANSIT, Ph.ACOUSTIC_HOMING, Ph.DESCENT)
DOCKING_PHASES = (Ph.VISUAL_DOCKING, Ph.UNDOCK, Ph.INSPECTION, Ph.LATCHED)


def _every(hz, dt):
    return max(int(round(1.0 / (hz * dt))), 1)


def _vec(a):
    return [float(v) for v in a]


class Trial:
    def __init__(self, scenario, seed=None, log=None, layout=None):
        cfg = scenario
        self.cfg = cfg
        self.seed = int(cfg.seed if seed is None else seed)
        self.log = log
        if layout is None:
            layout = load_layout(cfg.layout) if cfg.layout else default_layout()
        self.layout = layout
        g = layout.geometry
        self.geometry = g
        self.dt = cfg.dt
        mcfg = cfg.mission
        self.mcfg = mcfg

        # sensors (noise removed entirely in noiseless runs)
        s = cfg.sensors
        self.cam = s.camera.noiseless() if cfg.noiseless else s.camera
        if cfg.noiseless:
            self.usbl = UsblParams(ping_period=s.usbl.ping_period, sigma=0.0, dropout=0.0,
                                   cone_diameter=s.usbl.cone_diameter, station_depth=s.usbl.station_depth)
            self.imu = ImuParams(0.0, 0.0, 0.0, 0.0, 0.0, False)
            self.dvl = DvlParams(0.0)
            self.depth = DepthParams(0.0)
        else:
            self.usbl, self.imu, self.dvl, self.depth = s.usbl, s.imu, s.dvl, s.depth

        # station in the world: USBL head at (0, 0, station_depth)
        head = np.asarray(g.usbl_head, dtype=float)
        self.station_pose = Pose(np.array([0.0, 0.0, self.usbl.station_depth]) - head, frame=FrameId.WORLD_NED,
                                 child=FrameId.STATION)
        self.station_inv = invert(self.station_pose)
        self.star_world = compose(self.station_pose, layout.tag_star_pose)
        self.head_world = np.array([0.0, 0.0, self.usbl.station_depth])
        self.latch = LatchState(dock_position=tuple(g.dock_point), dock_heading=g.dock_heading)
        dock_station = Pose.from_euler(g.dock_point, 0.0, 0.0, g.dock_heading, FrameId.STATION, FrameId.BODY)
        dock_world = compose(self.station_pose, dock_station)
        self.dock_world = (dock_world.position, dock_world.yaw)

        # world draws come first and in a fixed order so that scenario variants
        # sharing a seed see the same fish, bias, current and start offsets
        rng = np.random.default_rng(self.seed)
        self.rng = rng
        occ = cfg.occlusions
        fish = generate_fish_schedule(rng, occ.fish_rate, cfg.duration_cap, occ.duration_range,
                                      occ.coverage_range, n_ids=max(layout.ids) + 1)
        if not occ.enabled or cfg.noiseless:
            fish = ()
        if occ.blackout:
            fish = (FishEvent(0.0, math.inf, frozenset(layout.ids)),)
        self.occlusions = Occlusions.for_layout(layout, fish)
        self.bias = ImuBias.draw(self.imu, rng)
        cur_dir, cur_frac = rng.uniform(0.0, 2 * math.pi), rng.uniform()
        jitter = rng.normal(size=4)
        if cfg.noiseless:
            cur_frac = 0.0
            jitter = np.zeros(4)
        c = cfg.current
        vel = np.asarray(c.velocity, dtype=float) + cur_frac * c.random_speed * np.array(
            [math.cos(cur_dir), math.sin(cur_dir)])
        wave = c.wave_amplitude if not cfg.noiseless else 0.0
        self.env = CurrentField(tuple(vel), c.depth_profile, c.shielding, tuple(g.box_min), tuple(g.box_max),
                                self.station_pose, wave, c.wave_period)

        gc = cfg.guidance
        star_station = tuple(layout.tag_star_pose.position)
        self.loops = build_loops(g, gc.stand_off, star_station, gc.transit_speed, gc.final_speed)
        self.circuits = build_inspection(g, gc.inspection_stand_off, star_station, gc.inspection_speed)
        self.gains = gc.gains

        self.home_ekf = Ekf(cfg.homing_ekf, FrameId.WORLD_NED)
        self.dock_ekf = Ekf(cfg.ekf, FrameId.TAG_STAR)

        self.every_cam = _every(s.rates.camera_hz, self.dt)
        self.every_dvl = _every(s.rates.dvl_hz, self.dt)
        self.every_depth = _every(s.rates.depth_hz, self.dt)
        self.every_usbl = max(int(round(self.usbl.ping_period / self.dt)), 1)

        hc = mcfg.homing
        self.docking_depth = hc.docking_depth
        if self.docking_depth is None:
            self.docking_depth = float(self.station_pose.position[2] + g.entry_center[2])

        self._init_state(jitter)

    # ------------------------------------------------------------------
    # setup
    # ------------------------------------------------------------------

    def _star_to_world(self, p, yaw):
        pw = self.star_world.transform_point(p)
        return pw, wrap_angle(yaw + self.star_world.yaw)

    def _world_to_star(self, p, yaw):
        R = self.star_world.rotation
        return R.T @ (np.asarray(p) - self.star_world.position), wrap_angle(yaw - self.star_world.yaw)

    def _init_state(self, jitter):
        cfg = self.cfg
        st = cfg.start
        mode = cfg.mode.value
        self.mode = mode
        self.phase_entered = 0.0
        self.inspection_enabled = mode == "inspection" or (mode == "full" and self.mcfg.inspection)
        if mode == "docking":
            nominal = self.approach_start(cfg.approach)
            pos, yaw = nominal[:3], nominal[3]
            true_pos = pos + np.array([jitter[0], jitter[1], 0.2 * jitter[2]]) * st.jitter_position
            true_yaw = yaw + jitter[3] * st.jitter_heading
            pw, yw = self._star_to_world(true_pos, true_yaw)
            self.truth = VehicleState(np.array([*pw, yw]))
            self.phase = Ph.VISUAL_DOCKING
            x0 = np.zeros(15)
            x0[:3] = pos
            x0[5] = yaw
            self.dock_ekf.reset(x0, 0.0)
        elif mode == "full":
            pw = np.array([st.surface_north, st.surface_east, 0.0])
            self.truth = VehicleState(np.array([*pw, 0.0]))
            self.phase = Ph.SURFACE_TRANSIT
            x0 = np.zeros(15)
            x0[:2] = pw[:2] + 2.0 * jitter[:2]
            cov = self.home_ekf.config.initial_covariance()
            cov[0, 0] = cov[1, 1] = 9.0
            self.home_ekf.reset(x0, 0.0, cov)
        else:
            self.truth = engage_latch(VehicleState(), self.dock_world)
            self.phase = Ph.LATCHED
            self._reset_dock_filter_at_dock(0.0)
        self.t = 0.0
        self.fix_times = []
        self.usbl_center = None
        self.target = None
        self.path = None
        self.path_index = 0
        self.pid = PidState()
        self.last_marker_time = None
        self.reattempts = 0
        self.latched = self.truth.latched
        self.collision = False
        self.timeline = [(0.0, self.phase.value)]
        self.waypoints_reached = 0
        self.docking_start = 0.0 if self.phase is Ph.VISUAL_DOCKING else None
        self.docking_duration = None
        self.circuit_index = 0
        self.circuit_start = None
        self.circuit_durations = []
        self.redocks = 0
        self.faces_seen = set()
        self.latched_at = 0.0 if self.phase is Ph.LATCHED else None
        self.abort_reason = None
        self.success = False
        self.done = False
        self.n_markers = 0
        self.descent = {"max_horizontal": 0.0, "max_heading": 0.0, "exit": None, "exit_depth": None}
        self.nees_sum, self.nees_n = 0.0, 0
        if self.phase is Ph.VISUAL_DOCKING:
            self._start_docking(restart=False)

    def approach_start(self, approach):
        """Nominal tag*-frame start ``[x, y, z, yaw]`` for a docking trial."""
        g = self.geometry
        st = self.cfg.start
        star = self.layout.tag_star_pose.position
        z = g.entry_center[2] - star[2]
        if approach == "front":
            return np.array([g.box_min[0] - star[0] - st.front_distance, g.entry_center[1] - star[1], z, 0.0])
        sign = 1.0 if approach == "right" else -1.0
        lateral = g.box_max[1] + self.cfg.guidance.stand_off + st.side_offset
        x = g.box_max[0] - star[0] + 0.1
        return np.array([x, sign * lateral, z, -sign * math.pi / 2])

    def _reset_dock_filter_at_dock(self, t):
        x0 = np.zeros(15)
        p, yaw = self._world_to_star(*self.dock_world)
        x0[:3] = p
        x0[5] = yaw
        cov = np.diag(np.full(15, 1e-4))
        self.dock_ekf.reset(x0, t, cov)

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------

    def _emit(self, record):
        if self.log is not None:
            self.log(record)

    def _set_phase(self, new, reason=None):
        old = self.phase
        self.phase = new
        self.phase_entered = self.t
        self.timeline.append((self.t, new.value))
        rec = {"kind": "phase", "t": self.t, "from": old.value, "to": new.value}
        if reason is not None:
            rec["reason"] = reason
        self._emit(rec)

    def _emit_path(self):
        self._emit({"kind": "path", "t": self.t, "path": self.path.kind.value, "index": self.path_index,
                    "frame": FrameId.TAG_STAR.value,
                    "waypoints": [_vec(w.position) for w in self.path.waypoints],
                    "names": [w.name for w in self.path.waypoints]})

    def _set_target(self, wp):
        self.target = wp
        self.pid.reset()

    def _start_docking(self, restart):
        est = estimate_pose(self.dock_ekf.state)
        left, right = self.loops
        if restart:
            starts = [(float(np.linalg.norm(p[0].position - est.position)), k, p) for k, p in
                      enumerate((right, left))]
            _, _, path = min(starts, key=lambda s: (s[0], s[1]))
            idx = 0
        else:
            path, idx = select_initial_waypoint(est, left, right)
        self.path = path
        self.path_index = idx
        self._set_target(path[idx])
        self._emit_path()

    def _truth_station(self):
        body = self.truth.pose()
        return compose(self.station_inv, body)

    def _camera_station(self):
        cam_world = compose(self.truth.pose(), self.cam.mount)
        return compose(self.station_inv, cam_world)

    def _truth_star_vec(self):
        p, yaw = self._world_to_star(self.truth.eta[:3], self.truth.eta[3])
        return p, yaw

    # ------------------------------------------------------------------
    # sensing and estimation
    # ------------------------------------------------------------------

    def _sense(self, k):
        t = self.t
        rng = self.rng
        truth = self.truth
        homing = self.phase in HOMING_PHASES
        filt = self.home_ekf if homing else self.dock_ekf
        imu = sample_imu(truth, self.imu, self.bias, rng, t)
        self.bias.advance(self.imu, self.dt, rng)
        packets = [Imu(imu.rates, imu.accel, t, heading=imu.heading)]
        if k % self.every_dvl == 0:
            d = sample_dvl(truth, self.dvl, rng, t)
            packets.append(Dvl(d.velocity, t))
        if k % self.every_depth == 0:
            d = sample_depth(truth, self.depth, rng, t)
            if homing:
                offset = derive_vertical_offset(max(d.z, 0.0), self.usbl.station_depth)
                packets.append(Depth(self.usbl.station_depth - offset, t))
        if k % self.every_usbl == 0 and self.phase in HOMING_PHASES:
            fix = sample_usbl(truth.eta[:3], self.head_world, self.usbl, t, rng)
            if fix is not None:
                self.fix_times.append(t)
                packets.append(UsblPosition(fix.north_offset, fix.east_offset, t))
                self._emit({"kind": "usbl", "t": t, "north": fix.north_offset, "east": fix.east_offset})
        self.marker_seen = False
        if k % self.every_cam == 0 and self.phase in (Ph.DESCENT, Ph.VISUAL_DOCKING, Ph.UNDOCK, Ph.INSPECTION):
            dets = detect_markers(self._camera_station(), self.layout, self.cam, self.occlusions, rng, t)
            self.n_markers = len(dets)
            if dets:
                self.marker_seen = True
                self.last_marker_time = t
                if self.phase is Ph.INSPECTION:
                    for d in dets:
                        self.faces_seen.add(self.layout.tag(d.tag_id).face.value)
                if not homing:
                    pose, cov = pose_from_detections(dets, self.layout, self.cam)
                    z = np.array([*pose.position, *pose.euler])
                    packets.append(MarkerPose(z, cov, t))
            if self.cfg.log.measurements:
                self._emit({"kind": "markers", "t": t, "ids": [d.tag_id for d in dets]})
        if self.phase is Ph.LATCHED:
            return
        filt.update(packets)

    # ------------------------------------------------------------------
    # main loop
    # ------------------------------------------------------------------

    def _inputs(self):
        homing = self.phase in HOMING_PHASES
        est = self.home_ekf.state if homing else self.dock_ekf.state
        clear = False
        if self.phase is Ph.UNDOCK:
            entry_x = self.geometry.box_min[0] - self.layout.tag_star_pose.position[0]
            clear = est[0] < entry_x - self.mcfg.undock_clear_distance
        circuit_done = (self.phase is Ph.INSPECTION and self.path is not None
                        and self.path_index >= len(self.path) - 1 and waypoint_reached(
                            estimate_pose(est), self.path[-1]))
        undock = (self.phase is Ph.LATCHED and self.inspection_enabled and self.circuit_index < 2
                  and self.t - self.latched_at >= self.mcfg.undock_hold)
        return MissionInputs(
            t=self.t,
            phase_entered=self.phase_entered,
            fix_times=tuple(self.fix_times),
            marker_visible=self.marker_seen,
            last_marker_time=self.last_marker_time,
            position=est[:3].copy(),
            depth=float(self.truth.eta[2]),
            homing_target=self.target if self.phase is Ph.ACOUSTIC_HOMING else None,
            docking_depth=self.docking_depth,
            latched=self.latched,
            undock_requested=undock,
            clear_of_funnel=bool(clear),
            circuit_complete=bool(circuit_done),
            collision=self.collision,
            reattempts=self.reattempts,
        )

    def _handle(self, new_phase, actions):
        for a in actions:
            kind = a.kind
            if kind is ActionKind.ABORT:
                self.abort_reason = a.reason.value
                self._set_phase(Ph.ABORT, a.reason.value)
                self.done = True
                return
            if kind is ActionKind.ENGAGE_HOMING:
                self._set_phase(new_phase)
                self.usbl_center = (0.0, 0.0)
                self._set_target(homing_target(self.usbl_center, self.mcfg.homing))
            elif kind is ActionKind.START_DESCENT:
                self._set_phase(new_phase)
                hc = self.mcfg.homing
                tp = self.target.position
                self._set_target(Waypoint((tp[0], tp[1], self.docking_depth + 0.1), hc.descent_heading,
                                          hc.target_radius, frame=FrameId.WORLD_NED, speed=0.2,
                                          vertical_speed=hc.descent_speed, name="descent"))
                self.descent_center = tp[:2].copy()
            elif kind is ActionKind.START_DOCKING:
                self.descent["exit"] = "marker" if self.marker_seen else "depth"
                self.descent["exit_depth"] = float(self.truth.eta[2])
                self._set_phase(new_phase)
                x0 = np.zeros(15)
                hs = self.home_ekf.state
                p, yaw = self._world_to_star(hs[:3], hs[5])
                x0[:3] = p
                x0[5] = yaw
                x0[6:9] = hs[6:9]
                self.dock_ekf.reset(x0, self.t)
                self.docking_start = self.t
                self._start_docking(restart=False)
            elif kind is ActionKind.REATTEMPT:
                self.reattempts += 1
                self._set_phase(new_phase, "REATTEMPT")
                self._start_docking(restart=True)
            elif kind is ActionKind.LATCH:
                self._set_phase(new_phase)
                self.truth = engage_latch(self.truth, self.dock_world)
                self._reset_dock_filter_at_dock(self.t)
                self.latched_at = self.t
                if self.docking_duration is None and self.docking_start is not None:
                    self.docking_duration = self.t - self.docking_start
                if self.circuit_start is not None:
                    self.redocks += 1
                if not self.inspection_enabled or self.circuit_index >= 2:
                    self.success = True
                    self.done = True
            elif kind is ActionKind.RELEASE:
                self._set_phase(new_phase)
                # the latch pins the vehicle, so the filter restarts from the dock pose
                self._reset_dock_filter_at_dock(self.t)
                self.target = None
            elif kind is ActionKind.START_INSPECTION:
                self._set_phase(new_phase)
                self.path = self.circuits[self.circuit_index]
                self.path_index = 0
                self.circuit_start = self.t
                self._set_target(self.path[0])
                self._emit_path()
            elif kind is ActionKind.REDOCK:
                self.circuit_durations.append(self.t - self.circuit_start)
                self.circuit_index += 1
                self._set_phase(new_phase)
                self._start_docking(restart=False)

    def _advance_waypoints(self, est_pose):
        if self.path is None or self.phase not in (Ph.VISUAL_DOCKING, Ph.INSPECTION):
            return
        while self.path_index < len(self.path) - 1 and waypoint_reached(est_pose, self.path[self.path_index]):
            wp = self.path[self.path_index]
            self.waypoints_reached += 1
            self._emit({"kind": "waypoint", "t": self.t, "path": self.path.kind.value, "index": self.path_index,
                        "name": wp.name})
            self.path_index += 1
            self._set_target(self.path[self.path_index])

    def _command(self):
        ph = self.phase
        if ph is Ph.LATCHED:
            return ThrustCommand()
        if ph is Ph.UNDOCK:
            est = self.dock_ekf.state
            hold = control(est, Waypoint(est[:3], 0.0, 1.0, speed=0.1), self.gains, None, self.dt)
            return ThrustCommand(-self.mcfg.undock_thrust, 0.0, 0.0, hold.yaw)
        if ph is Ph.SURFACE_TRANSIT:
            hc = self.mcfg.homing
            if self.target is None:
                self._set_target(Waypoint((hc.prior_north, hc.prior_east, hc.transit_depth), hc.descent_heading,
                                          1.0, frame=FrameId.WORLD_NED, speed=hc.transit_speed, name="prior"))
        est = self.home_ekf.state if ph in HOMING_PHASES else self.dock_ekf.state
        if ph in (Ph.VISUAL_DOCKING, Ph.INSPECTION):
            self._advance_waypoints(estimate_pose(est))
        return control(est, self.target, self.gains, self.pid, self.dt)

    def _log_step(self, k, cmd):
        if not self.cfg.log.steps or k % self.cfg.log.decimate:
            return
        homing = self.phase in HOMING_PHASES
        est = self.home_ekf.state if homing else self.dock_ekf.state
        ps, ys = self._truth_star_vec()
        self._emit({
            "kind": "step",
            "t": self.t,
            "phase": self.phase.value,
            "truth": _vec(self.truth.eta),
            "truth_star": _vec([*ps, ys]),
            "est": _vec([est[0], est[1], est[2], est[5]]),
            "frame": (FrameId.WORLD_NED if homing else FrameId.TAG_STAR).value,
            "markers": self.n_markers,
            "cmd": _vec(cmd.as_array()),
            "target": None if self.target is None else _vec(self.target.position),
        })

    def _track_descent(self):
        if self.phase is not Ph.DESCENT:
            return
        d = float(np.linalg.norm(self.truth.eta[:2] - self.descent_center))
        h = float(abs(wrap_angle(self.truth.eta[3] - self.mcfg.homing.descent_heading)))
        self.descent["max_horizontal"] = max(self.descent["max_horizontal"], d)
        self.descent["max_heading"] = max(self.descent["max_heading"], h)

    def _track_nees(self):
        if self.phase not in (Ph.VISUAL_DOCKING, Ph.INSPECTION):
            return
        ps, ys = self._truth_star_vec()
        e = self.dock_ekf.state
        err = np.array([e[0] - ps[0], e[1] - ps[1], e[2] - ps[2], wrap_angle(e[5] - ys)])
        idx = [0, 1, 2, 5]
        P = self.dock_ekf.cov[np.ix_(idx, idx)]
        self.nees_sum += float(err @ np.linalg.solve(P, err))
        self.nees_n += 1

    def run(self):
        cfg = self.cfg
        self._emit({"kind": "trial", "t": 0.0, "seed": self.seed, "approach": cfg.approach, "mode": self.mode,
                    "phase": self.phase.value})
        n_max = int(round(cfg.duration_cap / self.dt))
        k = 0
        while not self.done and k < n_max:
            self.t = k * self.dt
            self._sense(k)
            new_phase, actions = tick(self.phase, self._inputs(), self.mcfg)
            if actions:
                self._handle(new_phase, actions)
            if self.done:
                break
            cmd = self._command()
            self._log_step(k, cmd)
            self._advance_truth(cmd)
            self._track_descent()
            self._track_nees()
            k += 1
        if not self.done:
            self.t = k * self.dt
            self.abort_reason = AbortReason.DURATION_CAP.value
            if Ph.ABORT in LEGAL_TRANSITIONS[self.phase]:
                self._set_phase(Ph.ABORT, self.abort_reason)
        result = self._result()
        self._emit({"kind": "result", "t": self.t, **result.to_dict()})
        return result

    def _advance_truth(self, cmd):
        latch = self.latch if self.truth.latched else None
        new = step(self.truth, cmd, self.env, self.dt, self.cfg.vehicle, latch)
        self.collision = False
        if not new.latched:
            new, self.collision = station_contact(new, self.station_pose, self.geometry,
                                                  self.mcfg.vehicle_radius)
        self.truth = new
        self.latched = False
        if self.phase is Ph.VISUAL_DOCKING and not new.latched:
            self.latched = latch_check(self._truth_station(), self.latch)

    def _result(self):
        body = self._truth_station()
        err = float(np.linalg.norm(body.position - np.asarray(self.geometry.dock_point)))
        extra = {
            "redocks": self.redocks,
            "circuit_durations": [float(x) for x in self.circuit_durations],
            "faces_seen": sorted(self.faces_seen),
            "descent": self.descent,
            "reattempts": self.reattempts,
            "dropped_packets": self.home_ekf.dropped + self.dock_ekf.dropped,
            "nees_mean": self.nees_sum / self.nees_n if self.nees_n else None,
            "end_time": self.t,
        }
        return TrialResult(
            success=self.success,
            docking_duration=self.docking_duration if self.success or self.docking_duration else None,
            abort_reason=None if self.success else (self.abort_reason or AbortReason.DURATION_CAP.value),
            timeline=self.timeline,
            final_pose_error=err,
            waypoints_reached=self.waypoints_reached,
            seed=self.seed,
            approach=self.cfg.approach,
            extra=extra,
        )

