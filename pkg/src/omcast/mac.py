"""Per-slot MAC transaction: sounding, MCS choice, TXOP burst, ACKs, retries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable

import numpy as np

from . import phy
from .queueing import FRAME_BITS, MAX_RETX, Frame, UserState, cache_insert

if TYPE_CHECKING:
    from .scheduler import SchedulerDecision

T_MAX = 3e-3


@dataclass(frozen=True)
class TimingModel:
    """Frame-exchange durations in microseconds."""

    ndpa_us: float = 68.0
    ndp_us: float = 48.0
    csi_fb_us_per_user: float = 120.0
    csi_poll_us: float = 44.0
    data_preamble_us: float = 40.0
    ack_us_per_user: float = 32.0
    ack_req_us: float = 28.0
    sifs_us: float = 16.0
    difs_us: float = 34.0
    backoff_slot_us: float = 9.0
    backoff_slots_mean: float = 7.5

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"timing value {name} must be >= 0")

    def overhead(self, group_size: int, backoff_slots: float | None = None) -> float:
        """Everything in a slot except the data airtime, in seconds."""
        g = group_size
        slots = self.backoff_slots_mean if backoff_slots is None else backoff_slots
        us = (self.ndpa_us + self.sifs_us + self.ndp_us + self.sifs_us + self.csi_fb_us_per_user
              + (g - 1) * (self.csi_poll_us + self.sifs_us + self.csi_fb_us_per_user)
              + self.data_preamble_us
              + g * (self.sifs_us + self.ack_us_per_user)
              + (g - 1) * self.ack_req_us
              + self.difs_us + slots * self.backoff_slot_us)
        return us * 1e-6


def slot_duration(group_size: int, burst_bits: float, phy_rate_bps: float,
                  timing: TimingModel = TimingModel(), backoff_slots: float | None = None) -> float:
    """Slot length ``T[t]`` in seconds for one sounding + burst + ACK exchange."""
    if group_size < 1:
        raise ValueError("group size must be >= 1")
    if not phy_rate_bps > 0:
        raise ValueError("phy rate must be positive")
    return timing.overhead(group_size, backoff_slots) + burst_bits / phy_rate_bps


def frames_that_fit(phy_rate_bps: float, t_max: float = T_MAX, frame_bits: int = FRAME_BITS) -> int:
    """Whole frames whose data airtime stays within ``t_max``."""
    return int(math.floor(t_max * phy_rate_bps / frame_bits + 1e-9))


def pack_burst(frames: Iterable[Frame], phy_rate_bps: float, t_max: float = T_MAX,
               extra_recipients: Callable[[Frame], int] | None = None,
               retx_only: bool = False) -> tuple[list[Frame], int]:
    """Longest queue prefix that fits in the TXOP.

    Returns the frames and ``b``, the useful bits delivered: every frame
    counts once for the intended user plus once per group member that
    ``extra_recipients`` says needs it.
    """
    burst = []
    airtime = 0.0
    for f in frames:
        if retx_only and f.retx_count == 0:
            break
        airtime += f.size_bits / phy_rate_bps
        if airtime > t_max * (1 + 1e-12):
            break
        burst.append(f)
    if extra_recipients is None:
        b = sum(f.size_bits for f in burst)
    else:
        b = sum(f.size_bits * (1 + extra_recipients(f)) for f in burst)
    return burst, b


@dataclass
class SlotOutcome:
    duration: float
    group: tuple[int, ...]
    mcs: int
    data_airtime: float = 0.0
    delivered: list[Frame] = field(default_factory=list)   # ACKed by the intended user
    errored: list[Frame] = field(default_factory=list)     # kept for retransmission
    lost: list[Frame] = field(default_factory=list)        # retry limit exhausted
    cached: dict[int, list[Frame]] = field(default_factory=dict)
    bits: dict[int, int] = field(default_factory=dict)
    removed: list[Frame] = field(default_factory=list)     # left the intended queue, in order

    @property
    def total_bits(self) -> int:
        return sum(self.bits.values())


def transact(decision: "SchedulerDecision", users: list[UserState], channels: np.ndarray,
             estimates: np.ndarray, table: phy.McsTable, *, timing: TimingModel = TimingModel(),
             t_max: float = T_MAX, n0: float = 1.0, normalization: str = "common",
             error_model: bool = False, max_retx: int = MAX_RETX) -> SlotOutcome:
    """Run steps 2 to 5 of the frame exchange for a non-idle decision.

    ``channels``/``estimates`` hold the true and fed-back current channels of
    the users in ``decision.group`` (same order).  Mutates the intended
    user's queue and the group members' caches.
    """
    group = tuple(decision.group)
    k = decision.intended
    user = users[k]
    try:
        rates = phy.group_rates(estimates, n0, normalization)
        mcs = phy.select_mcs(rates, table)
    except phy.DegenerateChannelError:
        mcs = phy.NO_TRANSMISSION
    if mcs == phy.NO_TRANSMISSION:
        return SlotOutcome(slot_duration(len(group), 0, table.rate_bps(0), timing), group, mcs)

    rate = table.rate_bps(mcs)
    members = [users[s] for s in group if s != k]

    def extra(f: Frame) -> int:
        return sum(1 for m in members if m.needs(f.content_id, f.seq))

    burst, _ = pack_burst(user.queue.frames, rate, t_max, retx_only=decision.retransmission)
    burst_bits = sum(f.size_bits for f in burst)
    out = SlotOutcome(slot_duration(len(group), burst_bits, rate, timing), group, mcs,
                      data_airtime=burst_bits / rate)

    ok = {s: True for s in group}
    if error_model and burst:
        realized = phy.group_rates(estimates, n0, normalization, realized=channels)
        need = table.required_efficiency[mcs]
        ok = {s: bool(r >= need) for s, r in zip(group, realized)}

    for m in members:
        if not ok[m.index]:
            continue
        got = [f for f in burst if m.needs(f.content_id, f.seq)]
        for f in got:
            cache_insert(m.cache, f.content_id, f.seq)
        if got:
            out.cached[m.index] = got
            out.bits[m.index] = sum(f.size_bits for f in got)

    q = user.queue
    if ok[k]:
        out.delivered = q.pop_head(len(burst))
        out.removed = list(out.delivered)
        out.bits[k] = sum(f.size_bits for f in out.delivered)
    elif burst:
        sent = q.pop_head(len(burst))
        keep = []
        for f in sent:
            if f.retx_count >= max_retx:
                out.lost.append(f)
                out.removed.append(f)
            else:
                f.retx_count += 1
                keep.append(f)
        for f in reversed(keep):
            q.frames.appendleft(f)
            q.Q += f.size_bits
        out.errored = keep
    user.retx_pending = bool(q.frames) and q.frames[0].retx_count > 0
    return out
