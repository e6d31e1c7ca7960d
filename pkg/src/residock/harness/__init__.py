"""Scenario configuration, batches, logs, plots and the command line."""

from .batch import BatchSummary, run_batch, summarize
from .config import ScenarioConfig, SiteProfile, config_from_dict, load_config, profile
from .log import read_log, replay, run_logged, verify_replay

__all__ = [
    "BatchSummary",
    "ScenarioConfig",
    "SiteProfile",
    "config_from_dict",
    "load_config",
    "profile",
    "read_log",
    "replay",
    "run_batch",
    "run_logged",
    "summarize",
    "verify_replay",
]
