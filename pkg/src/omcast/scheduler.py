"""Drift-plus-penalty (LO) scheduling and dropping, plus MLWDF and RR baselines.

All schedulers share the same machinery once the intended user is known:
multicast group formation, MCS prediction from outdated CSI and TXOP
packing.  A pending retransmission always wins the slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import phy
from .mac import T_MAX, TimingModel, frames_that_fit, pack_burst, slot_duration
from .queueing import EPSILON, FRAME_BITS, Frame, UserQueue, UserState

MAX_GROUP = 4
IDLE_QUANTUM = 0.5e-3


@dataclass(frozen=True)
class LoParams:
    V: float = 1000.0
    beta: float = 4e-5
    v: float = 125.0
    epsilon: float = EPSILON
    L_max: int = 8000
    T_max: float = T_MAX

    def __post_init__(self):
        for name in ("V", "beta", "v", "epsilon", "L_max", "T_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"LO parameter {name} must be positive")


@dataclass
class SchedulerDecision:
    intended: int | None
    group: tuple[int, ...] = ()
    mcs: int = phy.NO_TRANSMISSION
    frames: list[Frame] = field(default_factory=list)
    bits: int = 0             # predicted useful bits, counted once per recipient
    duration: float = 0.0     # predicted slot time (s)
    score: float = math.nan
    retransmission: bool = False

    @property
    def idle(self) -> bool:
        return self.intended is None

    def mu(self, n_users: int) -> np.ndarray:
        out = np.zeros(n_users, dtype=int)
        if self.intended is not None:
            out[self.intended] = 1
        return out


@dataclass(frozen=True)
class CandidateScore:
    user: int
    score: float
    duration: float
    bits: int


IDLE = SchedulerDecision(None)


class SchedulingView:
    """What the scheduler knows at the start of a slot.

    ``channels`` is the outdated CSI ``(K, N, Nr, Nt)`` and ``Z`` the HOL
    delays in ms.  Per-user arrays derived from the user states are
    rebuilt by :meth:`refresh`.
    """

    def __init__(self, users: list[UserState], channels: np.ndarray, Z, table: phy.McsTable, *,
                 timing: TimingModel = TimingModel(), t_max: float = T_MAX, n0: float = 1.0,
                 normalization: str = "common", multicast: bool = True,
                 frame_bits: int = FRAME_BITS, unicast_rate=None):
        self.users = users
        self.table = table
        self.timing = timing
        self.t_max = t_max
        self.n0 = n0
        self.normalization = normalization
        self.multicast = multicast
        self.frame_bits = frame_bits
        self.content = np.array([u.content_id for u in users])
        self.by_content = {c: np.flatnonzero(self.content == c) for c in np.unique(self.content)}
        self.content_size = np.array([len(self.by_content[c]) for c in self.content])
        self._fit = np.array([frames_that_fit(table.rate_bps(m), t_max, frame_bits)
                              for m in range(len(table))])
        self.set_channels(channels, unicast_rate)
        self.refresh(Z)

    def set_channels(self, channels: np.ndarray, unicast_rate=None):
        self.channels = channels
        power = phy.subcarrier_power(channels)
        if unicast_rate is None:
            unicast_rate = phy.unicast_rates(channels, self.n0, self.normalization, power)
        self.unicast_rate = unicast_rate
        self.unicast_mcs = phy.mcs_for_rates(unicast_rate, self.table)
        nr = channels.shape[2]
        self.mcs_ub = phy.mcs_for_rates(nr * np.log2(1.0 + power / (nr * self.n0)).mean(axis=1),
                                        self.table)

    def refresh(self, Z):
        self.Z = np.asarray(Z, dtype=float)
        self.qlen = np.array([len(u.queue) for u in self.users])
        self.qbits = np.array([u.queue.Q for u in self.users], dtype=float)
        self.next_seq = np.array([u.next_seq for u in self.users])

    def frames_fit(self, mcs: int) -> int:
        return int(self._fit[mcs]) if mcs >= 0 else 0


# -- scoring ------------------------------------------------------------------

def lo_score(Z_k, sum_Z_others, V, epsilon, T_k, beta, b_k):
    """Per-candidate drift-plus-penalty score."""
    return Z_k * Z_k - (sum_Z_others + V) * epsilon * T_k + V * beta * b_k


def z_max(params: LoParams) -> float:
    """Worst-case HOL delay (ms) enforced by the drop rule."""
    return math.sqrt(params.V * params.v * params.beta * params.L_max)


def form_group(k: int, view: SchedulingView, window: list[Frame]) -> tuple[int, ...]:
    """Intended user plus up to three same-content users that need the burst.

    Eligible users still need at least one frame of ``window``; they are
    ranked by the norm criterion (ties to the lower index).
    """
    if not window or not view.multicast:
        return (k,)
    same = view.by_content[view.content[k]]
    cand = same[same != k]
    if cand.size == 0:
        return (k,)
    seqs = np.array([f.seq for f in window])
    keys = [f.key for f in window]
    # queue order is sequence order, so the frames a user still needs form a suffix
    start = np.searchsorted(seqs, view.next_seq[cand])
    mask = start < len(window)
    for i in np.flatnonzero(mask):
        held = view.users[cand[i]].cache.entries
        if held:
            mask[i] = not held.issuperset(keys[start[i]:])
    eligible = cand[mask]
    if eligible.size == 0:
        return (k,)
    metric = _metrics(view.channels, k, eligible)
    order = np.lexsort((eligible, -metric))[: MAX_GROUP - 1]
    return (k,) + tuple(int(s) for s in eligible[order])


def _metrics(channels: np.ndarray, k: int, others: np.ndarray) -> np.ndarray:
    hk = channels[k]
    hs = channels[others]
    if hk.shape[1] == 1:
        prod = hs.conj() @ hk[:, 0, :, None]  # (S, N, 1, 1)
        return (prod.real ** 2 + prod.imag ** 2).sum(axis=(1, 2, 3)) / hk.shape[0]
    return np.array([phy.grouping_metric(hk, h) for h in hs])


def evaluate(k: int, view: SchedulingView, params: LoParams | None = None,
             retransmission: bool = False) -> SchedulerDecision:
    """Group, predicted MCS, burst, ``b`` and ``T`` for intended user ``k``.

    The score is filled in when ``params`` is given.
    """
    user = view.users[k]
    q = user.queue
    uni = int(view.unicast_mcs[k])
    if retransmission:
        group = (k,)
        mcs = uni
    else:
        window = q.head(view.frames_fit(uni if uni >= 0 else 0))
        group = form_group(k, view, window)
        if len(group) == 1:
            mcs = uni
        else:
            try:
                rates = phy.group_rates(view.channels[list(group)], view.n0, view.normalization)
                mcs = phy.select_mcs(rates, view.table)
            except phy.DegenerateChannelError:
                mcs = phy.NO_TRANSMISSION
    if mcs == phy.NO_TRANSMISSION:
        frames, bits = [], 0
        duration = slot_duration(len(group), 0, view.table.rate_bps(0), view.timing)
    else:
        rate = view.table.rate_bps(mcs)
        members = [view.users[s] for s in group[1:]]
        extra = (lambda f: sum(1 for m in members if m.needs(f.content_id, f.seq))) if members else None
        frames, bits = pack_burst(q.frames, rate, view.t_max, extra, retx_only=retransmission)
        duration = slot_duration(len(group), sum(f.size_bits for f in frames), rate, view.timing)
    score = math.nan
    if params is not None:
        Zk = float(view.Z[k])
        score = lo_score(Zk, float(view.Z.sum()) - Zk, params.V, params.epsilon, duration,
                         params.beta, bits)
    return SchedulerDecision(k, group, mcs, frames, bits, duration, score, retransmission)


def score_candidate(k: int, view: SchedulingView, params: LoParams) -> CandidateScore:
    d = evaluate(k, view, params)
    return CandidateScore(k, d.score, d.duration, d.bits)


def _pending_retransmission(view: SchedulingView) -> int | None:
    for u in view.users:
        if u.retx_pending and len(u.queue):
            return u.index
    return None


def lo_select(view: SchedulingView, params: LoParams = LoParams()) -> SchedulerDecision:
    """Argmax of the drift-plus-penalty score over users with queued frames.

    Users that no one else could join are scored exactly in one vectorized
    pass; the rest get a cheap upper bound.  Candidates are visited in
    decreasing order of that key and the search stops once no remaining key
    can beat the best exact score.  Ties go to the larger HOL delay, then
    the lower index.
    """
    k = _pending_retransmission(view)
    if k is not None:
        return evaluate(k, view, params, retransmission=True)
    cands = np.flatnonzero(view.qlen > 0)
    if cands.size == 0:
        return IDLE
    Z = view.Z
    Zc = Z[cands]
    cost = (float(Z.sum()) - Zc + params.V) * params.epsilon
    vb = params.V * params.beta
    table = view.table
    # no precoder can beat the per-tone matched filter, so its MCS caps both
    # the burst size and the PHY rate of any group containing k
    mcs_ub = view.mcs_ub[cands]
    rate_ub = np.where(mcs_ub >= 0, table.phy_rate_mbps[np.maximum(mcs_ub, 0)] * 1e6, np.inf)
    bits_ub = np.where(mcs_ub >= 0, np.minimum(view.qbits[cands], view.t_max * rate_ub), 0.0)
    extra = _extra_bits_bound(view, cands, bits_ub) if view.multicast else np.zeros(cands.size)
    key = Zc * Zc - cost * view.timing.overhead(1) + np.maximum(0.0, bits_ub * (vb - cost / rate_ub)) + vb * extra

    # users nobody can join are scored exactly here (whole frames of one size)
    uni = view.unicast_mcs[cands]
    exact = (extra == 0) & (mcs_ub >= 0) & (view.qbits[cands] == view.qlen[cands] * view.frame_bits)
    if exact.any():
        m = np.maximum(uni, 0)
        rate = table.phy_rate_mbps[m] * 1e6
        n = np.where(uni >= 0, np.minimum(view.qlen[cands], view._fit[m]), 0)
        bits = n * view.frame_bits
        duration = view.timing.overhead(1) + bits / rate
        score = lo_score(Zc, float(Z.sum()) - Zc, params.V, params.epsilon, duration, params.beta, bits)
        key = np.where(exact, score, key)

    best_k = None
    best = None
    best_key = None
    for i in np.lexsort((cands, -Zc, -key)):
        if best_key is not None and key[i] + 1e-9 * (1.0 + abs(key[i])) < best_key[0]:
            break
        k = int(cands[i])
        if exact[i]:
            d, sc = None, float(key[i])
        else:
            d = evaluate(k, view, params)
            sc = d.score
        cand_key = (sc, float(Z[k]), -k)
        if best_key is None or cand_key > best_key:
            best_k, best, best_key = k, d, cand_key
    return best if best is not None else evaluate(best_k, view, params)


def _extra_bits_bound(view: SchedulingView, cands: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Upper bound on the bits other group members can use from k's burst.

    Member ``s`` can only use frames of k's queue with ``seq >= next_seq[s]``
    and k's queue holds no sequence number beyond ``next_seq[k] - 1``.
    """
    ns = view.next_seq
    lead = ns[cands][:, None] - ns[None, :]
    same = view.content[cands][:, None] == view.content[None, :]
    useful = np.where(same & (lead > 0), np.minimum(lead * view.frame_bits, bits[:, None]), 0.0)
    if useful.shape[1] > MAX_GROUP - 1:
        useful = -np.partition(-useful, MAX_GROUP - 2, axis=1)[:, : MAX_GROUP - 1]
    return useful.sum(axis=1)


def mlwdf_priority(Z, rates) -> int:
    """Index maximizing ``Z_k * r_k``; ties to larger ``Z``, then lower index."""
    Z = np.asarray(Z, dtype=float)
    w = Z * np.asarray(rates, dtype=float)
    idx = np.arange(len(Z))
    return int(np.lexsort((idx, -Z, -w))[0])


def mlwdf_select(view: SchedulingView) -> SchedulerDecision:
    k = _pending_retransmission(view)
    if k is not None:
        return evaluate(k, view, retransmission=True)
    cands = np.flatnonzero(view.qlen > 0)
    if cands.size == 0:
        return IDLE
    mcs = view.unicast_mcs[cands]
    rates = np.where(mcs >= 0, view.table.phy_rate_mbps[np.maximum(mcs, 0)] * 1e6, 0.0)
    k = int(cands[mlwdf_priority(view.Z[cands], rates)])
    return evaluate(k, view)


class RoundRobin:
    """Cyclic scan over nonempty queues starting after the last served user."""

    def __init__(self, cursor: int = -1):
        self.cursor = cursor

    def next_user(self, nonempty) -> int | None:
        nonempty = np.asarray(nonempty, dtype=bool)
        n = nonempty.size
        for step in range(1, n + 1):
            k = (self.cursor + step) % n
            if nonempty[k]:
                self.cursor = k
                return k
        return None

    def select(self, view: SchedulingView) -> SchedulerDecision:
        k = _pending_retransmission(view)
        if k is not None:
            return evaluate(k, view, retransmission=True)
        k = self.next_user(view.qlen > 0)
        if k is None:
            return IDLE
        return evaluate(k, view)


def rr_select(view: SchedulingView, rr: RoundRobin) -> SchedulerDecision:
    return rr.select(view)


# -- dropping -----------------------------------------------------------------

def drop_frames(queue: UserQueue, params: LoParams = LoParams()) -> int:
    """Fewest HOL frames whose removal advances the HOL by more than ``T_max``.

    All frames when no such prefix exists; capped at the largest whole-frame
    count within ``L_max``.
    """
    frames = queue.frames
    if not frames:
        return 0
    hol = frames[0].arrival_time
    n = len(frames)
    for i, f in enumerate(frames):
        if (f.arrival_time - hol) * params.epsilon > params.epsilon * params.T_max:
            n = i
            break
    return min(n, max(1, int(params.L_max // frames[0].size_bits)))


def drop_unit(queue: UserQueue, params: LoParams = LoParams()) -> int:
    """``L_k`` in bits: the size of the :func:`drop_frames` prefix."""
    frames = queue.frames
    return sum(frames[i].size_bits for i in range(drop_frames(queue, params)))


def lo_drop(Z_tilde: float, L_k: float, params: LoParams = LoParams(), v_k: float | None = None) -> float:
    """Drop ``L_k`` bits iff ``Z_tilde**2 >= V * beta * v_k * L_k``."""
    v = params.v if v_k is None else v_k
    if L_k > 0 and Z_tilde * Z_tilde >= params.V * params.beta * v * L_k:
        return L_k
    return 0


def baseline_deadline_drop(queues, z_max_ms: float, now: float, epsilon: float = EPSILON) -> list[int]:
    """Number of HOL frames per queue whose age at ``now`` exceeds ``z_max_ms``."""
    out = []
    for q in queues:
        n = 0
        for f in q.frames:
            if (now - f.arrival_time) * epsilon > z_max_ms:
                n += 1
            else:
                break
        out.append(n)
    return out
