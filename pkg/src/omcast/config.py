"""Flat ``section.key = value`` configuration files and the resolved run manifest.

Example::

    # five users, multicast off
    sim.users = 5
    sim.multicast = off
    traffic.load_bps = 1e6
    lo.V = 2000

Lines starting with ``#`` and blank lines are ignored.  Unknown keys and
out-of-range values raise :class:`ConfigError` naming the key.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

from . import phy
from .mac import TimingModel
from .scheduler import LoParams
from .sim import CASE_SNR_DB, SCHEDULERS, ScenarioConfig
from .traffic import SEQUENCE_MODES

ENV_VAR = "OMCAST_CONFIG"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# -- value parsers ------------------------------------------------------------

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _positive(v):
    if not v > 0:
        raise ValueError("must be positive")


def _nonneg(v):
    if v < 0:
        raise ValueError("must be >= 0")


def _at_least_one(v):
    if v < 1:
        raise ValueError("must be >= 1")


def _choice(options):
    def check(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(map(str, options))}")
    return check


@dataclass(frozen=True)
class _Key:
    parse: Callable
    check: Callable | None = None


# key -> (target, attribute); targets: scenario, lo, timing, channel, mcs, run
_KEYS: dict[str, tuple[str, str, _Key]] = {}


def _register(section: str, target: str, names, parse, check=None):
    for name in names:
        key = name if isinstance(name, str) else name[0]
        attr = name if isinstance(name, str) else name[1]
        _KEYS[f"{section}.{key}"] = (target, attr, _Key(parse, check))


_register("sim", "scenario", [("case", "case")], _int, _choice(sorted(CASE_SNR_DB)))
_register("sim", "scenario", [("users", "n_users"), "sessions"], _int, _at_least_one)
_register("sim", "scenario", ["scheduler"], str, _choice(SCHEDULERS))
_register("sim", "scenario", ["multicast", "error_model"], _bool)
_register("sim", "scenario", [("duration_s", "duration_s"), ("idle_quantum_s", "idle_quantum_s"),
                              ("deadline_ms", "deadline_ms")], float, _positive)
_register("sim", "scenario", ["seed"], _int, _nonneg)
_register("sim", "run", ["k_min", "k_max", "jobs"], _int, _at_least_one)
_register("traffic", "scenario", ["load_bps"], float, _nonneg)
_register("traffic", "scenario", ["on_s"], float, _positive)
_register("traffic", "scenario", ["off_s", ("max_offset_s", "max_offset_s")], float, _nonneg)
_register("traffic", "scenario", ["n_contents", "frame_bits"], _int, _at_least_one)
_register("traffic", "scenario", ["sequence"], str, _choice(SEQUENCE_MODES))
_register("lo", "lo", ["V", "beta", "v", "epsilon", "T_max"], float, _positive)
_register("lo", "lo", ["L_max"], _int, _at_least_one)
_register("mac", "timing", [f.name for f in fields(TimingModel)], float, _nonneg)
_register("mac", "scenario", ["max_retx"], _int, _nonneg)
_register("phy", "scenario", ["n0"], float, _positive)
_register("phy", "channel", ["n_subcarriers", "n_tx", "n_rx", "n_streams", "n_taps", "fft_size",
                             "epoch_slots"], _int, _at_least_one)
_register("phy", "channel", ["tap_decay_db"], float, _nonneg)
_register("phy", "channel", ["csi_nmse"], float, _nonneg)
_register("phy", "channel", ["precoder_normalization"], str, _choice(("common", "per_subcarrier")))
_register("phy", "mcs", [("mcs_efficiency", "efficiency"), ("mcs_rate_mbps", "phy_rate_mbps")], _floats)
_register("phy", "mcs", [("mcs_gap_db", "gap_db")], float, _nonneg)
_register("sweep", "run", ["snr_start_db", "snr_stop_db"], float)
_register("sweep", "run", ["snr_step_db"], float, _positive)
_register("sweep", "run", ["draws"], _int, _at_least_one)
_register("output", "run", ["dir"], str)

KEYS = tuple(_KEYS)


@dataclass(frozen=True)
class RunManifest:
    """Everything a run depends on, fully resolved."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    k_min: int = 1
    k_max: int = 100
    jobs: int = 1
    snr_start_db: float = 0.0
    snr_stop_db: float = 45.0
    snr_step_db: float = 1.0
    draws: int = 200
    dir: str = "results"

    def __post_init__(self):
        if self.k_min > self.k_max:
            raise ConfigError("sim.k_min", "must not exceed sim.k_max")
        if self.snr_stop_db < self.snr_start_db:
            raise ConfigError("sweep.snr_stop_db", "must not be below sweep.snr_start_db")

    def items(self) -> list[tuple[str, str]]:
        """Every key with its resolved value, in registry order."""
        objs = self._targets()
        out = []
        for key, (target, attr, _) in _KEYS.items():
            obj = objs[target]
            value = getattr(obj, attr)
            if target == "mcs" and attr != "gap_db":
                value = tuple(float(x) for x in value)
            out.append((key, _fmt(value)))
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    def _targets(self):
        s = self.scenario
        return {"scenario": s, "lo": s.lo, "timing": s.timing, "channel": s.channel,
                "mcs": s.mcs, "run": self}


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw ``key -> value`` pairs of a config file (later lines win)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
        values[key] = value
    return values


def build_manifest(values: dict[str, str], base: RunManifest | None = None) -> RunManifest:
    """Apply string ``values`` on top of ``base`` (defaults when omitted)."""
    base = base or RunManifest()
    updates: dict[str, dict] = {t: {} for t in ("scenario", "lo", "timing", "channel", "mcs", "run")}
    for key, text in values.items():
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
        target, attr, parser = _KEYS[key]
        try:
            value = parser.parse(text)
            if parser.check is not None:
                parser.check(value)
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
        updates[target][attr] = value

    s = base.scenario
    lo = _rebuild(s.lo, updates["lo"], "lo")
    timing = _rebuild(s.timing, updates["timing"], "mac")
    channel = _rebuild(s.channel, updates["channel"], "phy")
    mcs = s.mcs
    if updates["mcs"]:
        rows = {"efficiency": mcs.efficiency, "phy_rate_mbps": mcs.phy_rate_mbps, "gap_db": mcs.gap_db}
        rows.update(updates["mcs"])
        try:
            mcs = phy.McsTable(rows["efficiency"], rows["phy_rate_mbps"], rows["gap_db"])
        except ValueError as exc:
            key = next(k for k, (t, a, _) in _KEYS.items() if t == "mcs" and a in updates["mcs"])
            raise ConfigError(key, str(exc)) from None
    try:
        scenario = replace(s, lo=lo, timing=timing, channel=channel, mcs=mcs, **updates["scenario"])
    except ValueError as exc:
        raise ConfigError(_guess_key(str(exc), "scenario", "sim"), str(exc)) from None
    try:
        return replace(base, scenario=scenario, **updates["run"])
    except ConfigError:
        raise
    except ValueError as exc:  # pragma: no cover - run fields are checked per key
        raise ConfigError("sim", str(exc)) from None


def _rebuild(obj, changes: dict, section: str):
    if not changes:
        return obj
    try:
        return replace(obj, **changes)
    except ValueError as exc:
        target = {"lo": "lo", "mac": "timing", "phy": "channel"}[section]
        raise ConfigError(_guess_key(str(exc), target, section), str(exc)) from None


def _guess_key(message: str, target: str, section: str) -> str:
    """Key whose attribute name appears in a validation message, else the section."""
    for key, (t, attr, _) in _KEYS.items():
        if t == target and attr in message:
            return key
    return section


def load_manifest(path: str | os.PathLike | None = None, overrides: dict[str, str] | None = None,
                  env: dict | None = None) -> RunManifest:
    """Defaults, then the config file (``path`` or ``$OMCAST_CONFIG``), then ``overrides``."""
    env = os.environ if env is None else env
    if path is None:
        path = env.get(ENV_VAR) or None
    values = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read config file ({exc.strerror})") from None
        values.update(parse_text(text, str(path)))
    values.update(overrides or {})
    return build_manifest(values)


def parse_manifest(text: str) -> RunManifest:
    return build_manifest(parse_text(text))
