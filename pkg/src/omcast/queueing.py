"""Per-user AP queues, HOL-delay recursions and user-side caches.

HOL delays are kept in milliseconds; ``epsilon`` converts seconds to that
unit (1000).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import islice

import numpy as np

FRAME_BITS = 8000
MAX_RETX = 3
EPSILON = 1000.0


@dataclass(slots=True)
class Frame:
    content_id: int
    seq: int
    arrival_time: float
    size_bits: int = FRAME_BITS
    retx_count: int = 0

    @property
    def key(self):
        return (self.content_id, self.seq)


class UserCache:
    """Frames a user received while it was not the intended receiver.

    ``entries`` is never evicted, so ``occupancy`` only grows within a
    session.  ``pending`` holds the cached frames the user's own request
    stream has not reached yet and ``peak`` is the largest number of them
    held at once, i.e. the storage the user actually needs.
    """

    __slots__ = ("entries", "pending", "peak")

    def __init__(self):
        self.entries: set[tuple[int, int]] = set()
        self.pending: set[tuple[int, int]] = set()
        self.peak = 0

    @property
    def occupancy(self) -> int:
        return len(self.entries)

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __len__(self):
        return len(self.entries)

    def consume(self, key) -> bool:
        """The user's stream reached ``key``; True if it is served from the cache."""
        if key in self.entries:
            self.pending.discard(key)
            return True
        return False


def cache_insert(cache: UserCache, content_id: int, seq: int) -> UserCache:
    key = (content_id, seq)
    if key not in cache.entries:
        cache.entries.add(key)
        cache.pending.add(key)
        if len(cache.pending) > cache.peak:
            cache.peak = len(cache.pending)
    return cache


class UserQueue:
    """FIFO of frames waiting at the AP for one user; ``Q`` is the queued bit count."""

    __slots__ = ("user", "frames", "Q")

    def __init__(self, user: int = 0):
        self.user = user
        self.frames: deque[Frame] = deque()
        self.Q = 0

    def __len__(self):
        return len(self.frames)

    @property
    def empty(self) -> bool:
        return not self.frames

    @property
    def hol(self) -> Frame | None:
        return self.frames[0] if self.frames else None

    def head(self, n: int) -> list[Frame]:
        return list(islice(self.frames, n))

    def pop_head(self, n: int) -> list[Frame]:
        out = [self.frames.popleft() for _ in range(n)]
        self.Q -= sum(f.size_bits for f in out)
        return out

    def hol_age_ms(self, now: float, epsilon: float = EPSILON) -> float:
        return (now - self.frames[0].arrival_time) * epsilon if self.frames else 0.0


class HolState:
    """HOL-delay registers of all users (ms).

    ``Z`` is the HOL delay at the start of the slot, ``Z_tilde`` the
    intermediate value after the transmission decision and ``M`` the
    realized HOL advance used by the last update.
    """

    __slots__ = ("Z", "Z_tilde", "M")

    def __init__(self, n_users: int):
        self.Z = np.zeros(n_users)
        self.Z_tilde = np.zeros(n_users)
        self.M = np.zeros(n_users)


@dataclass
class UserState:
    """Everything the AP tracks about one user during a session."""

    index: int
    content_id: int
    snr_db: float
    queue: UserQueue = None
    cache: UserCache = field(default_factory=UserCache)
    next_seq: int = 0  # first sequence number the user's flow has not delivered to the AP yet
    retx_pending: bool = False

    def __post_init__(self):
        if self.queue is None:
            self.queue = UserQueue(self.index)

    def needs(self, content_id: int, seq: int) -> bool:
        """True if a copy of this frame would be useful to the user later."""
        return (content_id == self.content_id and seq >= self.next_seq
                and (content_id, seq) not in self.cache.entries)


def enqueue(queue: UserQueue, frame: Frame, cache: UserCache) -> bool:
    """Append ``frame`` unless the user already holds it in its cache."""
    if cache.consume(frame.key):
        return False
    queue.frames.append(frame)
    queue.Q += frame.size_bits
    return True


def update_queue_length(Q, b, d, A):
    """Queue backlog after serving ``b`` and dropping ``d`` bits, then adding ``A``."""
    return max(0, Q - b - d) + A


def psi(mu, M, Z, T, epsilon=EPSILON):
    """HOL reduction from the transmission decision (negative when unserved)."""
    if mu:
        return min(M, Z)
    return -epsilon * T


def update_intermediate_hol(Z, psi_value):
    return max(0.0, Z - psi_value)


def phi(omega, M, Z_tilde):
    """HOL reduction from the drop decision."""
    if omega:
        return min(M, Z_tilde)
    return 0.0


def update_hol(Z_tilde, phi_value):
    return max(0.0, Z_tilde - phi_value)
