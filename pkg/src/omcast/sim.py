"""Slot-level simulation of one AP serving K users, plus outage and capacity metrics.

A session runs the loop

1. the scheduler picks an intended user from outdated CSI,
2. the MAC sounds the current channel and transmits the burst,
3. LO drops (or the baselines' deadline drop) are applied at slot end,
4. the HOL registers are updated,
5. frames arriving during the slot are enqueued.

Everything random is keyed on the session seed, so a session is a pure
function of ``(config, seed)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import phy
from .mac import TimingModel, frames_that_fit, slot_duration, transact
from .queueing import (EPSILON, FRAME_BITS, MAX_RETX, UserState, enqueue, phi, psi,
                       update_hol, update_intermediate_hol)
from .scheduler import (IDLE_QUANTUM, LoParams, RoundRobin, SchedulingView,
                        baseline_deadline_drop, drop_frames, lo_drop, lo_select,
                        mlwdf_select, z_max)
from .traffic import SEQUENCE_MODES, ContentCatalog, FlowSpec, assign_contents

CASE_SNR_DB = {1: (18.0, 45.0), 2: (30.0, 45.0)}
SCHEDULERS = ("lo", "mlwdf", "rr")
OUTAGE_FRACTION = 0.01
DELAY_BIN_MS = 10.0
DELAY_BINS = 31  # last bin collects everything >= 300 ms

_SNR_STREAM = 13


@dataclass(frozen=True)
class ScenarioConfig:
    case: int = 1
    n_users: int = 10
    scheduler: str = "lo"
    multicast: bool = True
    load_bps: float = 0.5e6
    duration_s: float = 30.0
    sessions: int = 100
    seed: int = 1
    error_model: bool = False
    idle_quantum_s: float = IDLE_QUANTUM
    deadline_ms: float = 200.0
    n_contents: int = 10
    on_s: float = 2.0
    off_s: float = 1.0
    max_offset_s: float = 0.5
    sequence: str = "shifted"
    frame_bits: int = FRAME_BITS
    max_retx: int = MAX_RETX
    n0: float = 1.0
    lo: LoParams = field(default_factory=LoParams)
    timing: TimingModel = field(default_factory=TimingModel)
    channel: phy.ChannelConfig = field(default_factory=phy.ChannelConfig)
    mcs: phy.McsTable = field(default_factory=phy.McsTable.default)

    def __post_init__(self):
        if self.case not in CASE_SNR_DB:
            raise ValueError(f"case must be one of {sorted(CASE_SNR_DB)}")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"scheduler must be one of {SCHEDULERS}")
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if self.load_bps < 0:
            raise ValueError("load_bps must be >= 0")
        for name in ("duration_s", "idle_quantum_s", "deadline_ms", "n0", "on_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sessions < 1:
            raise ValueError("sessions must be >= 1")
        if self.off_s < 0 or self.max_offset_s < 0 or self.max_retx < 0:
            raise ValueError("off_s, max_offset_s and max_retx must be >= 0")
        if self.sequence not in SEQUENCE_MODES:
            raise ValueError(f"sequence must be one of {SEQUENCE_MODES}")
        if self.frame_bits < 1 or self.n_contents < 1:
            raise ValueError("frame_bits and n_contents must be >= 1")
        if frames_that_fit(self.mcs.rate_bps(0), self.lo.T_max, self.frame_bits) < 1:
            raise ValueError("a frame does not fit in T_max at the lowest MCS")

    @property
    def snr_range_db(self) -> tuple[float, float]:
        return CASE_SNR_DB[self.case]


class MetricsLedger:
    """Per-user frame counts and per-run statistics of one session."""

    def __init__(self, n_users: int, seed: int, content, snr_db):
        self.seed = seed
        self.content = np.asarray(content, dtype=int)
        self.snr_db = np.asarray(snr_db, dtype=float)
        z = lambda: np.zeros(n_users, dtype=np.int64)
        self.arrived = z()
        self.delivered = z()
        self.late = z()
        self.lost = z()
        self.cache_served = z()
        self.residual = z()
        self.peak_cache = z()
        self.delay_sum_ms = np.zeros(n_users)
        self.delay_hist = np.zeros((n_users, DELAY_BINS), dtype=np.int64)
        self.duration_s = 0.0
        self.n_slots = 0
        self.idle_slots = 0
        self.busy_s = 0.0
        self.delivered_bits = 0
        self.multicast_slots = 0
        self.max_z_ms = 0.0
        self.max_delay_ms = 0.0
        self.max_airtime_s = 0.0

    @property
    def n_users(self) -> int:
        return self.arrived.size

    @property
    def mean_delay_ms(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.delivered > 0, self.delay_sum_ms / np.maximum(self.delivered, 1), 0.0)

    @property
    def throughput_bps(self) -> float:
        return self.delivered_bits / self.duration_s if self.duration_s else 0.0

    @property
    def mean_slot_s(self) -> float:
        return self.duration_s / self.n_slots if self.n_slots else 0.0

    def conserved(self) -> bool:
        return bool(np.all(self.arrived == self.delivered + self.lost + self.cache_served + self.residual))

    def __eq__(self, other):
        if not isinstance(other, MetricsLedger):
            return NotImplemented
        a, b = vars(self), vars(other)
        return a.keys() == b.keys() and all(
            np.array_equal(a[k], b[k]) if isinstance(a[k], np.ndarray) else a[k] == b[k] for k in a)


def user_snrs(n_users: int, seed: int, case: int) -> np.ndarray:
    lo, hi = CASE_SNR_DB[case]
    return np.random.default_rng([int(seed), _SNR_STREAM]).uniform(lo, hi, size=n_users)


class _Channels:
    """Lazily drawn, memoized fading epochs (only the two latest are kept)."""

    def __init__(self, synth: phy.ChannelSynthesizer):
        self.synth = synth
        self._memo: dict[int, np.ndarray] = {}

    def __call__(self, epoch: int) -> np.ndarray:
        h = self._memo.get(epoch)
        if h is None:
            h = self.synth.draw_epoch(epoch)
            self._memo = {e: v for e, v in self._memo.items() if e >= epoch - 1}
            self._memo[epoch] = h
        return h


def run_session(config: ScenarioConfig, seed: int | None = None, *,
                trace: Callable | None = None) -> MetricsLedger:
    """Simulate one session of ``config.duration_s`` seconds.

    ``trace`` is called after every slot with ``(t, T, Z, users)`` where
    ``t`` is the end of the slot; tests use it to watch invariants.
    """
    seed = config.seed if seed is None else int(seed)
    K = config.n_users
    params = config.lo
    eps = params.epsilon
    table = config.mcs
    snr = user_snrs(K, seed, config.case)
    gains = config.n0 * 10.0 ** (snr / 10.0)
    synth = phy.ChannelSynthesizer(config.channel, gains, seed)
    channels = _Channels(synth)
    es = config.channel.epoch_slots

    if config.load_bps > 0:
        catalog = ContentCatalog(config.n_contents, config.load_bps, config.frame_bits)
        flows = assign_contents(K, seed, config.load_bps, catalog, config.max_offset_s,
                                config.on_s, config.off_s, config.sequence)
        next_idx = [0] * K
        next_arr = np.array([f.arrival_time(0) for f in flows])
    else:
        contents = np.random.default_rng([seed, 11]).integers(0, config.n_contents, size=K)
        flows = [FlowSpec(k, int(c), 1.0, 0.0, config.on_s, config.off_s, config.frame_bits)
                 for k, c in enumerate(contents)]
        next_idx = [0] * K
        next_arr = np.full(K, np.inf)

    users = [UserState(k, f.content_id, float(snr[k]), next_seq=f.first_seq)
             for k, f in enumerate(flows)]
    ledger = MetricsLedger(K, seed, [f.content_id for f in flows], snr)
    Z = np.zeros(K)
    view = SchedulingView(users, channels(0), Z, table, timing=config.timing, t_max=params.T_max,
                          n0=config.n0, normalization=config.channel.precoder_normalization,
                          multicast=config.multicast, frame_bits=config.frame_bits)
    rr = RoundRobin()
    if config.scheduler == "lo":
        select = lambda v: lo_select(v, params)
    elif config.scheduler == "mlwdf":
        select = mlwdf_select
    else:
        select = rr.select
    drop_floor = params.V * params.beta * params.v * config.frame_bits
    deadline = config.deadline_ms
    queued = 0          # total frames in AP queues
    t = 0.0
    slot = 0

    while t < config.duration_s:
        if queued == 0:
            T = config.idle_quantum_s
            ledger.idle_slots += 1
            Zt = np.zeros(K)
        else:
            view.set_channels(channels(slot // es))
            view.refresh(Z)
            d = select(view)
            k = d.intended
            if k is None:  # pragma: no cover - work-conserving schedulers never idle here
                raise RuntimeError("scheduler idled with frames queued")
            group = list(d.group)
            cur = channels((slot + 1) // es)[group]
            est = synth.estimate(cur, group, (slot + 1) // es)
            q = users[k].queue
            old_hol = q.frames[0].arrival_time
            out = transact(d, users, cur, est, table, timing=config.timing, t_max=params.T_max,
                           n0=config.n0, normalization=config.channel.precoder_normalization,
                           error_model=config.error_model, max_retx=config.max_retx)
            T = out.duration
            ledger.busy_s += T
            ledger.max_airtime_s = max(ledger.max_airtime_s, out.data_airtime)
            if len(out.group) > 1:
                ledger.multicast_slots += 1
            for f in out.delivered:
                delay = (t - f.arrival_time) * eps
                ledger.delay_sum_ms[k] += delay
                ledger.delay_hist[k, min(int(delay // DELAY_BIN_MS), DELAY_BINS - 1)] += 1
                if delay > deadline:
                    ledger.late[k] += 1
                if delay > ledger.max_delay_ms:
                    ledger.max_delay_ms = delay
            ledger.delivered[k] += len(out.delivered)
            ledger.lost[k] += len(out.lost)
            ledger.delivered_bits += out.total_bits
            queued -= len(out.removed)

            # HOL registers: unserved users age by eps*T, the served one advances
            Zt = np.where(view.qlen > 0, Z + eps * T, 0.0)
            if q.frames:
                M = (q.frames[0].arrival_time - old_hol) * eps
                Zt[k] = update_intermediate_hol(Z[k], psi(1, M, Z[k], T, eps)) + eps * T
            else:
                Zt[k] = update_intermediate_hol(Z[k], psi(1, Z[k], Z[k], T, eps))

            # drops at slot end
            now = t + T
            if config.scheduler == "lo":
                for j in np.flatnonzero(Zt * Zt >= drop_floor):
                    qj = users[j].queue
                    n = drop_frames(qj, params)
                    L = sum(qj.frames[i].size_bits for i in range(n))
                    if n and lo_drop(float(Zt[j]), L, params):
                        Zt[j] = _drop(qj, n, float(Zt[j]), eps)
                        ledger.lost[j] += n
                        queued -= n
            else:
                late = np.flatnonzero(Zt > deadline)
                for j, n in zip(late, baseline_deadline_drop([users[j].queue for j in late],
                                                              deadline, now, eps)):
                    if n:
                        Zt[j] = _drop(users[j].queue, n, float(Zt[j]), eps)
                        ledger.lost[j] += n
                        queued -= n

        t_end = t + T
        Z = Zt
        # arrivals during the slot join the queues at its end
        for j in np.flatnonzero(next_arr <= t_end):
            flow, u = flows[j], users[j]
            was_empty = not u.queue.frames
            n = next_idx[j]
            while True:
                f = flow.frame(n)
                if f.arrival_time > t_end:
                    break
                ledger.arrived[j] += 1
                u.next_seq = f.seq + 1
                if enqueue(u.queue, f, u.cache):
                    queued += 1
                else:
                    ledger.cache_served[j] += 1
                n += 1
            next_idx[j] = n
            next_arr[j] = f.arrival_time
            if was_empty and u.queue.frames:
                Z[j] = (t_end - u.queue.frames[0].arrival_time) * eps
        zmax = float(Z.max())
        if zmax > ledger.max_z_ms:
            ledger.max_z_ms = zmax
        t = t_end
        slot += 1
        ledger.n_slots += 1
        if trace is not None:
            trace(t, T, Z, users)

    ledger.duration_s = t
    for j, u in enumerate(users):
        ledger.residual[j] = len(u.queue)
        ledger.peak_cache[j] = u.cache.peak
    return ledger


def _drop(queue, n: int, Z_tilde: float, eps: float) -> float:
    """Drop ``n`` HOL frames and return the updated HOL register."""
    old_hol = queue.frames[0].arrival_time
    queue.pop_head(n)
    M = (queue.frames[0].arrival_time - old_hol) * eps if queue.frames else Z_tilde
    return update_hol(Z_tilde, phi(1, M, Z_tilde))


def _session(args):
    config, seed = args
    return run_session(config, seed)


def run_sessions(config: ScenarioConfig, jobs: int = 1) -> list[MetricsLedger]:
    """Sessions ``seed, seed+1, ...`` in order; ``jobs > 1`` fans out to processes."""
    work = [(config, config.seed + s) for s in range(config.sessions)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_session, work))
    return [_session(w) for w in work]


# -- outage and capacity ------------------------------------------------------

def user_outage(ledger: MetricsLedger, user: int) -> bool:
    """More than 1% of the user's frames were lost or late."""
    arrived = int(ledger.arrived[user])
    if arrived == 0:
        return False
    return (int(ledger.lost[user]) + int(ledger.late[user])) / arrived > OUTAGE_FRACTION


def outage_fraction(ledgers) -> float:
    flags = [user_outage(l, k) for l in ledgers for k in range(l.n_users)]
    return sum(flags) / len(flags) if flags else 0.0


def system_outage(ledgers) -> bool:
    """More than 1% of the pooled user-sessions are in outage."""
    flags = [user_outage(l, k) for l in ledgers for k in range(l.n_users)]
    if not flags:
        raise ValueError("system_outage needs at least one user")
    return sum(flags) / len(flags) > OUTAGE_FRACTION


def probe(config: ScenarioConfig, jobs: int = 1) -> tuple[bool, list[MetricsLedger]]:
    """Run ``config.sessions`` sessions and report whether the system avoids outage.

    Run serially, sessions stop as soon as the outage count already exceeds
    the 1% budget of the whole pool; the verdict is the same as running all.
    """
    if jobs > 1:
        ledgers = run_sessions(config, jobs)
        return not system_outage(ledgers), ledgers
    budget = OUTAGE_FRACTION * config.sessions * config.n_users
    count = 0
    ledgers = []
    for s in range(config.sessions):
        ledger = run_session(config, config.seed + s)
        ledgers.append(ledger)
        count += sum(user_outage(ledger, k) for k in range(ledger.n_users))
        if count > budget:
            return False, ledgers
    return True, ledgers


def supports(config: ScenarioConfig, jobs: int = 1) -> bool:
    return probe(config, jobs)[0]


def find_capacity(config: ScenarioConfig, k_min: int, k_max: int, jobs: int = 1):
    """:func:`capacity_search` plus the ledgers of the sessions run at the capacity."""
    kept: dict[int, list[MetricsLedger]] = {}

    def run(K):
        ok, ledgers = probe(replace(config, n_users=K), jobs)
        if ok:
            kept[K] = ledgers
        return ok

    log: dict[int, bool] = {}
    K = capacity_search(config, k_min, k_max, probe=run, log=log)
    return K, kept.get(K, []), log


def capacity_search(config: ScenarioConfig, k_min: int, k_max: int,
                    probe: Callable[[int], bool] | None = None, jobs: int = 1,
                    log: dict | None = None) -> int:
    """Largest ``K`` in ``[k_min, k_max]`` without system outage (``k_min - 1`` if none).

    Binary search assuming outage is monotone in ``K``.  ``probe(K)`` returns
    True when the system is NOT in outage; by default it runs
    ``config.sessions`` sessions.  ``log`` collects the probed ``K -> ok``.
    """
    if k_min > k_max:
        raise ValueError("need k_min <= k_max")
    if k_min < 1:
        raise ValueError("k_min must be >= 1")
    if probe is None:
        probe = lambda K: supports(replace(config, n_users=K), jobs)
    lo, hi = k_min - 1, k_max + 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        ok = bool(probe(mid))
        if log is not None:
            log[mid] = ok
        if ok:
            lo = mid
        else:
            hi = mid
    return lo


def cache_percentile(ledgers, q: float = 99.0) -> int:
    """Nearest-rank percentile of per-user peak cache occupancy over user-sessions."""
    values = np.sort(np.concatenate([np.asarray(l.peak_cache) for l in ledgers]))
    if values.size == 0:
        return 0
    rank = max(1, math.ceil(q / 100.0 * values.size - 1e-9))
    return int(values[rank - 1])


# -- throughput versus SNR ----------------------------------------------------

def snr_sweep(snr_db, draws: int = 200, seed: int = 1, config: ScenarioConfig = ScenarioConfig()):
    """Mean unicast throughput versus average SNR from Monte Carlo channel draws.

    Returns rows ``(snr_db, mean_mcs, phy_rate_mbps, mac_throughput_mbps)``:
    the PHY rate of the selected MCS and the goodput of a full TXOP burst
    including the sounding/ACK overhead, both averaged over the draws.
    """
    table = config.mcs
    rows = []
    for i, s in enumerate(np.asarray(snr_db, dtype=float)):
        gains = np.full(draws, config.n0 * 10.0 ** (s / 10.0))
        h = phy.ChannelSynthesizer(config.channel, gains, seed).draw_epoch(i)
        mcs = phy.mcs_for_rates(phy.unicast_rates(h, config.n0, config.channel.precoder_normalization),
                                table)
        phy_rate = np.zeros(draws)
        mac = np.zeros(draws)
        for m in np.unique(mcs[mcs >= 0]):
            rate = table.rate_bps(int(m))
            bits = frames_that_fit(rate, config.lo.T_max, config.frame_bits) * config.frame_bits
            phy_rate[mcs == m] = rate
            mac[mcs == m] = bits / slot_duration(1, bits, rate, config.timing)
        mean_mcs = float(np.mean(np.where(mcs >= 0, mcs, -1)))
        rows.append((float(s), mean_mcs, float(phy_rate.mean() / 1e6), float(mac.mean() / 1e6)))
    return rows
