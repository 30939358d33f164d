import numpy as np
import pytest
from hypothesis import settings

from omcast.queueing import Frame, UserState, enqueue

settings.register_profile("omcast", deadline=None, max_examples=60)
settings.load_profile("omcast")


def row(*entries):
    """Single-subcarrier 1x4 channel ``(1, 1, 4)`` from a list of gains."""
    return np.array(entries, dtype=complex).reshape(1, 1, -1)


def rayleigh(rng, n_sub=4, n_tx=4, scale=1.0):
    z = rng.standard_normal((n_sub, 1, n_tx)) + 1j * rng.standard_normal((n_sub, 1, n_tx))
    return z * np.sqrt(scale / 2)


def make_user(index, content=0, seqs=(), next_seq=None, arrival=0.0, spacing=0.016, cached=()):
    """User with queued frames ``seqs`` of ``content`` and optional cache entries."""
    u = UserState(index, content, 30.0)
    for i, s in enumerate(seqs):
        enqueue(u.queue, Frame(content, s, arrival + i * spacing), u.cache)
    u.next_seq = (max(seqs) + 1 if seqs else 0) if next_seq is None else next_seq
    for s in cached:
        u.cache.entries.add((content, s))
        u.cache.pending.add((content, s))
    return u


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def report(capsys):
    """Print one PASS/FAIL line for an acceptance criterion and remember it."""

    def emit(number, ok, detail):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
