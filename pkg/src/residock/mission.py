"""
Mission phase state machine.

``tick`` is a pure function of the current phase, a snapshot of mission
inputs and the mission config.  It returns the next phase plus the actions
the runner must carry out (engage homing, start docking, re-attempt ...).
The closed-loop simulation that feeds it lives in :mod:`residock.runner`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IllegalTransitionError
from .geometry import FrameId
from .guidance import Waypoint


class MissionPhase(str, enum.Enum):
    SURFACE_TRANSIT = "SURFACE_TRANSIT"
    ACOUSTIC_HOMING = "ACOUSTIC_HOMING"
    DESCENT = "DESCENT"
    VISUAL_DOCKING = "VISUAL_DOCKING"
    LATCHED = "LATCHED"
    UNDOCK = "UNDOCK"
    INSPECTION = "INSPECTION"
    ABORT = "ABORT"


P = MissionPhase
LEGAL_TRANSITIONS = {
    P.SURFACE_TRANSIT: {P.ACOUSTIC_HOMING, P.ABORT},
    P.ACOUSTIC_HOMING: {P.DESCENT, P.ABORT},
    P.DESCENT: {P.VISUAL_DOCKING, P.ABORT},
    # self-loop is the automatic re-attempt
    P.VISUAL_DOCKING: {P.VISUAL_DOCKING, P.LATCHED, P.ABORT},
    P.LATCHED: {P.UNDOCK},
    P.UNDOCK: {P.INSPECTION, P.ABORT},
    P.INSPECTION: {P.VISUAL_DOCKING, P.ABORT},
    P.ABORT: set(),
}


class ActionKind(str, enum.Enum):
    ENGAGE_HOMING = "ENGAGE_HOMING"
    START_DESCENT = "START_DESCENT"
    START_DOCKING = "START_DOCKING"
    REATTEMPT = "REATTEMPT"
    LATCH = "LATCH"
    RELEASE = "RELEASE"
    START_INSPECTION = "START_INSPECTION"
    REDOCK = "REDOCK"
    ABORT = "ABORT"


class AbortReason(str, enum.Enum):
    MARKER_LOSS = "MARKER_LOSS"
    PHASE_TIMEOUT = "PHASE_TIMEOUT"
    COLLISION = "COLLISION"
    DURATION_CAP = "DURATION_CAP"
    RUNTIME = "RUNTIME"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    reason: AbortReason | None = None


@dataclass(frozen=True)
class HomingConfig:
    required_fixes: int = 3
    fix_window: float = 10.0
    target_radius: float = 1.0
    offset_north: float = -1.0
    offset_east: float = 0.0
    # world depth (m) that ends the descent; None means the funnel-entry depth
    docking_depth: float | None = None
    descent_heading: float = 0.0
    transit_depth: float = 0.3
    transit_speed: float = 0.5
    # heave command cap; drag holds the actual descent rate near 0.5 m/s
    descent_speed: float = 0.8
    # rough site coordinate (relative to the USBL head) steered to before any fix
    prior_north: float = 0.0
    prior_east: float = 0.0

    def __post_init__(self):
        if self.required_fixes < 1:
            raise ValueError("required fix count must be at least 1")
        if self.fix_window <= 0:
            raise ValueError("fix window must be positive")
        if self.target_radius <= 0:
            raise ValueError("target radius must be positive")


@dataclass(frozen=True)
class AbortRules:
    marker_loss_timeout: float = 10.0
    phase_timeout: float = 300.0
    max_reattempts: int = 1

    def __post_init__(self):
        if self.marker_loss_timeout <= 0 or self.phase_timeout <= 0:
            raise ValueError("timeouts must be positive")
        if self.max_reattempts < 0:
            raise ValueError("max_reattempts must be non-negative")


@dataclass(frozen=True)
class MissionConfig:
    homing: HomingConfig = field(default_factory=HomingConfig)
    abort: AbortRules = field(default_factory=AbortRules)
    inspection: bool = False
    undock_hold: float = 5.0
    undock_thrust: float = 8.0
    undock_clear_distance: float = 0.6
    vehicle_radius: float = 0.2


@dataclass(frozen=True)
class MissionInputs:
    """Snapshot the runner hands to :func:`tick` every step."""

    t: float
    phase_entered: float
    fix_times: tuple = ()
    marker_visible: bool = False
    last_marker_time: float | None = None
    position: np.ndarray | None = None
    depth: float = 0.0
    homing_target: Waypoint | None = None
    docking_depth: float = math.inf
    latched: bool = False
    undock_requested: bool = False
    clear_of_funnel: bool = False
    circuit_complete: bool = False
    collision: bool = False
    reattempts: int = 0


def fixes_engaged(fix_times, required=3, window=10.0):
    """True if some ``required`` consecutive valid fixes span at most ``window`` seconds."""
    ts = sorted(fix_times)
    n = required - 1
    return any(ts[i + n] - ts[i] <= window + 1e-9 for i in range(len(ts) - n))


def transition(phase, new_phase):
    """Validate a phase change against the transition graph."""
    phase, new_phase = MissionPhase(phase), MissionPhase(new_phase)
    if new_phase not in LEGAL_TRANSITIONS[phase]:
        raise IllegalTransitionError(f"{phase.value} -> {new_phase.value} is not a legal transition")
    return new_phase


def homing_target(usbl_center, config=None):
    """Surface waypoint at the USBL centre plus the configured offset, facing North."""
    config = config or HomingConfig()
    n, e = usbl_center
    pos = (n + config.offset_north, e + config.offset_east, config.transit_depth)
    return Waypoint(pos, config.descent_heading, config.target_radius, heading_tol=math.radians(5.0),
                    frame=FrameId.WORLD_NED, speed=config.transit_speed, name="homing")


def _abort(reason):
    return MissionPhase.ABORT, (Action(ActionKind.ABORT, reason),)


def tick(phase, inputs, config=None):
    """One evaluation of the phase logic.  Returns ``(phase', actions)``."""
    config = config or MissionConfig()
    phase = MissionPhase(phase)
    rules = config.abort
    inp = inputs
    if phase is MissionPhase.ABORT:
        return phase, ()
    if phase is not MissionPhase.LATCHED:
        if inp.collision:
            return _abort(AbortReason.COLLISION)
        if inp.t - inp.phase_entered > rules.phase_timeout:
            return _abort(AbortReason.PHASE_TIMEOUT)

    if phase is MissionPhase.SURFACE_TRANSIT:
        if fixes_engaged(inp.fix_times, config.homing.required_fixes, config.homing.fix_window):
            return transition(phase, P.ACOUSTIC_HOMING), (Action(ActionKind.ENGAGE_HOMING),)
    elif phase is MissionPhase.ACOUSTIC_HOMING:
        tgt = inp.homing_target
        if tgt is not None and inp.position is not None:
            if np.linalg.norm(np.asarray(inp.position) - tgt.position) <= tgt.radius:
                return transition(phase, P.DESCENT), (Action(ActionKind.START_DESCENT),)
    elif phase is MissionPhase.DESCENT:
        if inp.marker_visible or inp.depth >= inp.docking_depth:
            return transition(phase, P.VISUAL_DOCKING), (Action(ActionKind.START_DOCKING),)
    elif phase is MissionPhase.VISUAL_DOCKING:
        if inp.latched:
            return transition(phase, P.LATCHED), (Action(ActionKind.LATCH),)
        seen = inp.phase_entered if inp.last_marker_time is None else max(inp.last_marker_time, inp.phase_entered)
        if inp.t - seen > rules.marker_loss_timeout:
            if inp.reattempts < rules.max_reattempts:
                return transition(phase, P.VISUAL_DOCKING), (Action(ActionKind.REATTEMPT),)
            return _abort(AbortReason.MARKER_LOSS)
    elif phase is MissionPhase.LATCHED:
        if inp.undock_requested:
            return transition(phase, P.UNDOCK), (Action(ActionKind.RELEASE),)
    elif phase is MissionPhase.UNDOCK:
        if inp.clear_of_funnel:
            return transition(phase, P.INSPECTION), (Action(ActionKind.START_INSPECTION),)
    elif phase is MissionPhase.INSPECTION:
        if inp.circuit_complete:
            return transition(phase, P.VISUAL_DOCKING), (Action(ActionKind.REDOCK),)
    return phase, ()


@dataclass
class TrialResult:
    success: bool
    docking_duration: float | None
    abort_reason: str | None
    timeline: list
    final_pose_error: float
    waypoints_reached: int
    seed: int = 0
    approach: str = "front"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.success and self.abort_reason is not None:
            raise ValueError("a successful trial cannot carry an abort reason")

    def to_dict(self):
        return {
            "success": self.success,
            "docking_duration": self.docking_duration,
            "abort_reason": self.abort_reason,
            "timeline": [[t, p] for t, p in self.timeline],
            "final_pose_error": self.final_pose_error,
            "waypoints_reached": self.waypoints_reached,
            "seed": self.seed,
            "approach": self.approach,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["success"], d["docking_duration"], d["abort_reason"], [tuple(x) for x in d["timeline"]],
                   d["final_pose_error"], d["waypoints_reached"], d.get("seed", 0), d.get("approach", "front"),
                   d.get("extra", {}))


def run_mission(scenario, seed=None, log=None):
    """Run one closed-loop trial; see :class:`residock.runner.Trial`."""
    from .runner import Trial
    return Trial(scenario, seed=seed, log=log).run()
