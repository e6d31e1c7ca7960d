"""
Scenario configuration.

A scenario document is YAML with a ``schema_version`` and a ``site`` profile.
The profile supplies defaults; every other key overrides them.  Unknown keys
are rejected so a typo in a noise parameter cannot pass silently.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..estimation import EkfConfig
from ..guidance import ControllerGains
from ..mission import AbortRules, HomingConfig, MissionConfig
from ..sensors import CameraModel, DepthParams, DvlParams, ImuParams, UsblParams
from ..vehicle import VehicleParams

SCHEMA_VERSION = 1


class SiteProfile(str, enum.Enum):
    SHALLOW_TBS = "SHALLOW_TBS"
    DEEP_90M = "DEEP_90M"


class Mode(str, enum.Enum):
    DOCKING = "docking"
    FULL = "full"
    INSPECTION = "inspection"


APPROACHES = ("front", "left", "right")


@dataclass(frozen=True)
class CurrentConfig:
    velocity: tuple = (0.0, 0.0)
    # per-trial random current of uniform direction and speed up to this value
    random_speed: float = 0.0
    shielding: float = 0.9
    depth_profile: tuple = ()
    wave_amplitude: float = 0.0
    wave_period: float = 6.0


@dataclass(frozen=True)
class SensorRates:
    camera_hz: float = 5.0
    dvl_hz: float = 5.0
    depth_hz: float = 5.0


@dataclass(frozen=True)
class SensorConfig:
    usbl: UsblParams = field(default_factory=UsblParams)
    imu: ImuParams = field(default_factory=ImuParams)
    dvl: DvlParams = field(default_factory=DvlParams)
    depth: DepthParams = field(default_factory=DepthParams)
    camera: CameraModel = field(default_factory=CameraModel)
    rates: SensorRates = field(default_factory=SensorRates)


@dataclass(frozen=True)
class GuidanceConfig:
    gains: ControllerGains = field(default_factory=ControllerGains)
    stand_off: float = 1.5
    transit_speed: float = 0.07
    final_speed: float = 0.035
    inspection_speed: float = 0.14
    inspection_stand_off: float = 1.5


@dataclass(frozen=True)
class OcclusionConfig:
    enabled: bool = False
    fish_rate: float = 0.02
    duration_range: tuple = (1.0, 3.0)
    coverage_range: tuple = (0.5, 1.0)
    # permanent full occlusion, used for forced-failure scenarios
    blackout: bool = False


@dataclass(frozen=True)
class StartConfig:
    front_distance: float = 3.5
    side_offset: float = 0.0
    jitter_position: float = 0.15
    jitter_heading: float = math.radians(5.0)
    surface_north: float = -20.0
    surface_east: float = 15.0


@dataclass(frozen=True)
class LogConfig:
    steps: bool = True
    measurements: bool = False
    decimate: int = 5


@dataclass(frozen=True)
class ScenarioConfig:
    schema_version: int = SCHEMA_VERSION
    site: SiteProfile = SiteProfile.DEEP_90M
    mode: Mode = Mode.DOCKING
    approach: str = "front"
    seed: int = 0
    dt: float = 0.1
    duration_cap: float = 600.0
    noiseless: bool = False
    layout: str | None = None
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    current: CurrentConfig = field(default_factory=CurrentConfig)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    ekf: EkfConfig = field(default_factory=EkfConfig)
    homing_ekf: EkfConfig = field(default_factory=EkfConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    mission: MissionConfig = field(default_factory=MissionConfig)
    occlusions: OcclusionConfig = field(default_factory=OcclusionConfig)
    start: StartConfig = field(default_factory=StartConfig)
    log: LogConfig = field(default_factory=LogConfig)

    def __post_init__(self):
        if not 0.0 < self.dt <= 0.1:
            raise ConfigError("dt must lie in (0, 0.1]")
        if self.approach not in APPROACHES:
            raise ConfigError(f"approach must be one of {APPROACHES}")
        if self.duration_cap <= 0:
            raise ConfigError("duration_cap must be positive")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}")

    @property
    def station_depth(self):
        """Depth of the USBL head on top of the station."""
        return self.sensors.usbl.station_depth

    def with_overrides(self, **changes):
        return replace(self, **changes)


def profile(site):
    """Site defaults before any document overrides."""
    site = SiteProfile(site)
    if site is SiteProfile.DEEP_90M:
        return ScenarioConfig(
            site=site,
            current=CurrentConfig(random_speed=0.05),
            sensors=SensorConfig(
                usbl=UsblParams(station_depth=90.0),
                imu=ImuParams(compass_drift_enabled=True),
                camera=CameraModel(attenuation_length=3.0),
            ),
            ekf=EkfConfig(compass_enabled=False),
            homing_ekf=EkfConfig(compass_enabled=True),
            mission=MissionConfig(abort=AbortRules(max_reattempts=0)),
            # fish traffic calibrated so side approaches lose sight at the corners more often
            occlusions=OcclusionConfig(enabled=True, fish_rate=0.08),
        )
    return ScenarioConfig(
        site=site,
        current=CurrentConfig(random_speed=0.05, wave_amplitude=1.5, wave_period=6.0),
        sensors=SensorConfig(usbl=UsblParams(station_depth=10.0, cone_diameter=100.0)),
        ekf=EkfConfig(compass_enabled=True),
        homing_ekf=EkfConfig(compass_enabled=True),
        mission=MissionConfig(abort=AbortRules(max_reattempts=0)),
    )


# ----------------------------------------------------------------------------
# Document <-> dataclass
# ----------------------------------------------------------------------------

def _convert(default, value, path):
    if is_dataclass(default):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _merge(default, value, path)
    if isinstance(default, enum.Enum):
        try:
            return type(default)(value)
        except ValueError:
            choices = [m.value for m in type(default)]
            raise ConfigError(f"{path}: {value!r} is not one of {choices}") from None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if isinstance(default, (int, float)) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return type(default)(value) if isinstance(default, float) else value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return {int(k) if str(k).isdigit() else k: v for k, v in value.items()}
    return value


def _merge(base, doc, path=""):
    names = {f.name for f in fields(base)}
    unknown = sorted(set(doc) - names)
    if unknown:
        where = path or "scenario"
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")
    changes = {}
    for k, v in doc.items():
        sub = f"{path}.{k}" if path else k
        changes[k] = _convert(getattr(base, k), v, sub)
    try:
        return replace(base, **changes)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'scenario'}: {exc}") from None


def config_from_dict(doc):
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be a mapping")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}")
    site = doc.get("site", SiteProfile.DEEP_90M.value)
    try:
        base = profile(site)
    except ValueError:
        raise ConfigError(f"site: {site!r} is not one of {[s.value for s in SiteProfile]}") from None
    return _merge(base, doc)


def load_config(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid YAML: {exc}") from None
    return config_from_dict(doc)


def _plain(value):
    if is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return value


def config_to_dict(cfg):
    return _plain(cfg)


def dump_config(cfg):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)

