"""Command line entry point: ``omcast run | capacity | sweep-snr``.

Every command resolves a :class:`~omcast.config.RunManifest` from defaults,
the config file (``--config`` or ``$OMCAST_CONFIG``) and flags, in that
order, and writes its results plus ``manifest.cfg`` into the output
directory.  Invalid configuration exits with status 2.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunManifest, load_manifest
from .sim import (MetricsLedger, cache_percentile, find_capacity, outage_fraction,
                  run_sessions, snr_sweep, system_outage)

RECORD_FIELDS = ("scheduler", "multicast", "load_bps", "users", "session", "user", "content",
                 "snr_db", "arrived", "delivered", "late", "lost", "cache_served", "peak_cache",
                 "mean_delay_ms")
SUMMARY_FIELDS = ("scheduler", "multicast", "load_bps", "case", "users", "sessions",
                  "outage_fraction", "system_outage", "capacity", "cache_p99", "throughput_mbps")
SWEEP_FIELDS = ("snr_db", "mean_mcs", "phy_rate_mbps", "mac_throughput_mbps")

# flag -> config key
_FLAG_KEYS = {
    "scheduler": "sim.scheduler",
    "multicast": "sim.multicast",
    "users": "sim.users",
    "load": "traffic.load_bps",
    "case": "sim.case",
    "seed": "sim.seed",
    "sessions": "sim.sessions",
    "duration": "sim.duration_s",
    "k_min": "sim.k_min",
    "k_max": "sim.k_max",
    "jobs": "sim.jobs",
    "out": "output.dir",
    "snr_start": "sweep.snr_start_db",
    "snr_stop": "sweep.snr_stop_db",
    "snr_step": "sweep.snr_step_db",
    "draws": "sweep.draws",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (default: $OMCAST_CONFIG)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, repeatable")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed")

    scenario = argparse.ArgumentParser(add_help=False)
    scenario.add_argument("--scheduler", choices=("lo", "mlwdf", "rr"))
    scenario.add_argument("--multicast", choices=("on", "off"))
    scenario.add_argument("--users")
    scenario.add_argument("--load", help="per-user load in bit/s")
    scenario.add_argument("--case", choices=("1", "2"))
    scenario.add_argument("--sessions")
    scenario.add_argument("--duration", help="session length in seconds")
    scenario.add_argument("--jobs", help="worker processes for sessions")

    sub.add_parser("run", parents=[common, scenario],
                   help="simulate sessions for one scenario")
    cap = sub.add_parser("capacity", parents=[common, scenario],
                         help="binary-search the user capacity")
    cap.add_argument("--k-min", dest="k_min")
    cap.add_argument("--k-max", dest="k_max")
    cap.add_argument("--schedulers", help="comma list, e.g. lo,mlwdf,rr")
    cap.add_argument("--multicast-modes", dest="multicast_modes", help="comma list of on/off")
    cap.add_argument("--loads", help="comma list of loads in bit/s")
    sweep = sub.add_parser("sweep-snr", parents=[common],
                           help="unicast throughput versus average SNR")
    sweep.add_argument("--snr-start", dest="snr_start")
    sweep.add_argument("--snr-stop", dest="snr_stop")
    sweep.add_argument("--snr-step", dest="snr_step")
    sweep.add_argument("--draws")
    return parser


def manifest_from_args(args: argparse.Namespace, env=None) -> RunManifest:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return load_manifest(args.config, overrides, env)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def record_rows(ledgers: list[MetricsLedger], scenario) -> list[list[str]]:
    rows = []
    mc = "on" if scenario.multicast else "off"
    for s, l in enumerate(ledgers):
        delay = l.mean_delay_ms
        for k in range(l.n_users):
            rows.append([_fmt(v) for v in (
                scenario.scheduler, mc, scenario.load_bps, l.n_users, s, k, int(l.content[k]),
                float(l.snr_db[k]), int(l.arrived[k]), int(l.delivered[k]), int(l.late[k]),
                int(l.lost[k]), int(l.cache_served[k]), int(l.peak_cache[k]), float(delay[k]))])
    return rows


def summary_row(ledgers: list[MetricsLedger], scenario, capacity=None) -> list[str]:
    users = ledgers[0].n_users if ledgers else (capacity or 0)
    if ledgers:
        frac = outage_fraction(ledgers)
        outage = system_outage(ledgers)
        p99 = cache_percentile(ledgers) if scenario.multicast else 0
        thr = sum(l.throughput_bps for l in ledgers) / len(ledgers) / 1e6
    else:
        frac, outage, p99, thr = 1.0, True, 0, 0.0
    return [_fmt(v) for v in (
        scenario.scheduler, "on" if scenario.multicast else "off", scenario.load_bps,
        scenario.case, users, len(ledgers), frac, outage, "" if capacity is None else capacity,
        p99, thr)]


def _write_manifest(out: Path, manifest: RunManifest):
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.cfg").write_text(manifest.to_text())


def cmd_run(manifest: RunManifest) -> int:
    out = Path(manifest.dir)
    _write_manifest(out, manifest)
    sc = manifest.scenario
    ledgers = run_sessions(sc, manifest.jobs)
    _write_csv(out / "records.csv", RECORD_FIELDS, record_rows(ledgers, sc))
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, [summary_row(ledgers, sc)])
    return 0


def cmd_capacity(manifest: RunManifest, schedulers=None, modes=None, loads=None) -> int:
    out = Path(manifest.dir)
    _write_manifest(out, manifest)
    base = manifest.scenario
    records, summary = [], []
    for load in loads or [base.load_bps]:
        for sched in schedulers or [base.scheduler]:
            for mc in modes if modes is not None else [base.multicast]:
                sc = replace(base, scheduler=sched, multicast=mc, load_bps=load)
                K, ledgers, _ = find_capacity(sc, manifest.k_min, manifest.k_max, manifest.jobs)
                records += record_rows(ledgers, sc)
                summary.append(summary_row(ledgers, sc, capacity=K))
    _write_csv(out / "records.csv", RECORD_FIELDS, records)
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, summary)
    return 0


def cmd_sweep(manifest: RunManifest) -> int:
    out = Path(manifest.dir)
    _write_manifest(out, manifest)
    n = int(np.floor((manifest.snr_stop_db - manifest.snr_start_db) / manifest.snr_step_db + 1e-9)) + 1
    grid = manifest.snr_start_db + manifest.snr_step_db * np.arange(n)
    rows = snr_sweep(grid, manifest.draws, manifest.scenario.seed, manifest.scenario)
    _write_csv(out / "sweep.csv", SWEEP_FIELDS, [[_fmt(v) for v in r] for r in rows])
    return 0


def _split(text, parse, key):
    if text is None:
        return None
    try:
        return [parse(x.strip()) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise ValueError(f"expected on/off, got {text!r}")
    return text == "on"


def _scheduler(text: str) -> str:
    if text not in ("lo", "mlwdf", "rr"):
        raise ValueError(f"unknown scheduler {text!r}")
    return text


def _load(text: str) -> float:
    value = float(text)
    if value < 0:
        raise ValueError("load must be >= 0")
    return value


def main(argv=None, env=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        manifest = manifest_from_args(args, env)
        if args.command == "run":
            return cmd_run(manifest)
        if args.command == "capacity":
            return cmd_capacity(
                manifest,
                _split(args.schedulers, _scheduler, "--schedulers"),
                _split(args.multicast_modes, _on_off, "--multicast-modes"),
                _split(args.loads, _load, "--loads"))
        return cmd_sweep(manifest)
    except ConfigError as exc:
        print(f"omcast: configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"omcast: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
