"""GNC library and deterministic simulator for a resident mini-ROV docking station."""

from .errors import (
    ConfigError,
    FrameMismatchError,
    GeometryError,
    IllegalTransitionError,
    InconsistentLayoutError,
    LayoutValidationError,
    NonFiniteStateError,
    ResidockError,
    SchemaMismatchError,
    SingularInnovationError,
)
from .geometry import FrameId, Pose, compose, invert, wrap_angle
from .layout import MarkerLayout, StationGeometry, default_layout, load_layout, validate_layout
from .mission import MissionPhase, TrialResult, run_mission

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FrameId",
    "FrameMismatchError",
    "GeometryError",
    "IllegalTransitionError",
    "InconsistentLayoutError",
    "LayoutValidationError",
    "MarkerLayout",
    "MissionPhase",
    "NonFiniteStateError",
    "Pose",
    "ResidockError",
    "SchemaMismatchError",
    "SingularInnovationError",
    "StationGeometry",
    "TrialResult",
    "compose",
    "default_layout",
    "invert",
    "load_layout",
    "run_mission",
    "validate_layout",
    "wrap_angle",
]
