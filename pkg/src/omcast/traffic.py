"""Content subscriptions and on/off constant-bit-rate frame arrivals.

Every content is one numbered sequence of frames and each user plays it
out with its own 2 s on / 1 s off cycle anchored at its start offset.

Two sequence modes decide where a user enters the content:

``"shifted"`` (default)
    every user starts from the content's first frame, so a user that
    started later requests exactly the same frames, later.
``"live"``
    a user starts from the frame the content's global clock is generating
    at its start offset, so same-content users request the same frame at
    nearly the same time and only drift apart around their off phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .queueing import FRAME_BITS, Frame

_CONTENT_STREAM = 11
_OFFSET_STREAM = 12

TABLE_LOADS_BPS = (0.5e6, 1e6, 2e6, 5e6)
SEQUENCE_MODES = ("shifted", "live")


@dataclass(frozen=True)
class ContentCatalog:
    n_contents: int = 10
    rate_bps: float = 0.5e6
    frame_bits: int = FRAME_BITS

    def __post_init__(self):
        if self.n_contents < 1:
            raise ValueError("catalog needs at least one content")
        if not self.rate_bps > 0:
            raise ValueError("content rate must be positive")

    @property
    def interarrival(self) -> float:
        return self.frame_bits / self.rate_bps

    def seq_at(self, t: float) -> int:
        """Sequence number being generated at time ``t`` on any content."""
        return int(math.floor(t / self.interarrival + 1e-9))


@dataclass(frozen=True)
class FlowSpec:
    user: int
    content_id: int
    rate_bps: float
    start_offset: float
    on_s: float = 2.0
    off_s: float = 1.0
    frame_bits: int = FRAME_BITS
    first_seq: int = 0

    def __post_init__(self):
        if not self.rate_bps > 0:
            raise ValueError("flow rate must be positive")
        if self.on_s <= 0 or self.off_s < 0:
            raise ValueError("on duration must be positive and off duration >= 0")
        if self.start_offset < 0:
            raise ValueError("start offset must be >= 0")

    @property
    def interarrival(self) -> float:
        return self.frame_bits / self.rate_bps

    @property
    def period(self) -> float:
        return self.on_s + self.off_s

    @cached_property
    def frames_per_on(self) -> int:
        return max(1, math.ceil(self.on_s / self.interarrival - 1e-9))

    def arrival_time(self, n: int) -> float:
        """Arrival time at the AP of the flow's ``n``-th frame (0-based)."""
        cycle, i = divmod(n, self.frames_per_on)
        return self.start_offset + cycle * self.period + i * self.interarrival

    def frame(self, n: int) -> Frame:
        return Frame(self.content_id, self.first_seq + n, self.arrival_time(n), self.frame_bits)

    def first_index_after(self, t: float) -> int:
        """Smallest frame index whose arrival time is strictly after ``t``."""
        if t < self.start_offset:
            return 0
        cycle = int((t - self.start_offset) // self.period)
        rel = t - self.start_offset - cycle * self.period
        i = int(math.floor(rel / self.interarrival)) + 1
        n = cycle * self.frames_per_on + min(i, self.frames_per_on)
        # guard against float rounding at the boundaries
        while n > 0 and self.arrival_time(n - 1) > t:
            n -= 1
        while self.arrival_time(n) <= t:
            n += 1
        return n


def assign_contents(n_users: int, seed: int, rate_bps: float = 0.5e6,
                    catalog: ContentCatalog | None = None, max_offset: float = 0.5,
                    on_s: float = 2.0, off_s: float = 1.0,
                    sequence: str = "shifted") -> list[FlowSpec]:
    """Uniform random content and start offset for each user.

    Contents and offsets come from separate seeded streams, so the first
    ``k`` users are the same whatever ``n_users`` is.
    """
    if n_users < 1:
        raise ValueError("need at least one user")
    if sequence not in SEQUENCE_MODES:
        raise ValueError(f"sequence must be one of {SEQUENCE_MODES}")
    catalog = catalog or ContentCatalog(rate_bps=rate_bps)
    contents = np.random.default_rng([int(seed), _CONTENT_STREAM]).integers(
        0, catalog.n_contents, size=n_users)
    offsets = np.random.default_rng([int(seed), _OFFSET_STREAM]).uniform(
        0.0, max_offset, size=n_users)
    live = sequence == "live"
    return [FlowSpec(k, int(c), rate_bps, float(o), on_s, off_s, catalog.frame_bits,
                     catalog.seq_at(o) if live else 0)
            for k, (c, o) in enumerate(zip(contents, offsets))]


def arrivals_in(flow: FlowSpec, t0: float, t1: float) -> list[Frame]:
    """Frames of ``flow`` arriving in ``(t0, t1]``."""
    if not t0 < t1:
        raise ValueError("need t0 < t1")
    out = []
    n = flow.first_index_after(t0)
    while True:
        a = flow.arrival_time(n)
        if a > t1:
            return out
        out.append(flow.frame(n))
        n += 1
