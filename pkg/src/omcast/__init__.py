"""Opportunistic multicast scheduling for a single-AP MIMO-OFDM WLAN downlink.

Modules: :mod:`~omcast.phy` (channels, precoding, MCS), :mod:`~omcast.queueing`
(queues, HOL recursions, caches), :mod:`~omcast.traffic` (on/off flows),
:mod:`~omcast.mac` (slot timing and the frame exchange),
:mod:`~omcast.scheduler` (LO, MLWDF, RR), :mod:`~omcast.sim` (sessions,
outage, capacity) and :mod:`~omcast.config` / :mod:`~omcast.cli`.
"""

from .config import ConfigError, RunManifest, load_manifest, parse_manifest
from .scheduler import LoParams, lo_select, mlwdf_select, RoundRobin, z_max
from .sim import ScenarioConfig, capacity_search, run_session, run_sessions

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "RunManifest", "load_manifest", "parse_manifest", "LoParams", "lo_select",
    "mlwdf_select", "RoundRobin", "z_max", "ScenarioConfig", "capacity_search", "run_session",
    "run_sessions",
]
