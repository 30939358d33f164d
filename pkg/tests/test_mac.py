import numpy as np
import pytest
from hypothesis import given, strategies as st

from omcast.mac import T_MAX, TimingModel, pack_burst, slot_duration, transact
from omcast.phy import McsTable
from omcast.queueing import Frame
from omcast.scheduler import SchedulerDecision

from conftest import make_user

TABLE = McsTable.default()
TM = TimingModel()


def us(x):
    return x * 1e-6


def test_pure_overhead_for_unicast():
    expect = us(68 + 16 + 48 + 16 + 120 + 40 + 16 + 32 + 34 + 7.5 * 9)
    assert slot_duration(1, 0, 6.5e6) == pytest.approx(expect, abs=1e-15)


def test_group_four_minus_one():
    diff = slot_duration(4, 80_000, 65e6) - slot_duration(1, 80_000, 65e6)
    assert diff == pytest.approx(3 * us(44 + 16 + 120 + 16 + 32) + 3 * us(28), abs=1e-15)


def test_data_airtime_one_millisecond():
    assert slot_duration(1, 65_000, 65e6) - slot_duration(1, 0, 65e6) == pytest.approx(1e-3, abs=1e-15)


@given(st.integers(1, 3), st.floats(0, 1e5), st.floats(6.5e6, 65e6))
def test_overhead_strictly_increasing_in_group(g, bits, rate):
    assert slot_duration(g + 1, bits, rate) > slot_duration(g, bits, rate)


@pytest.mark.parametrize("mcs, count", [(7, 24), (0, 2)])
def test_pack_burst_txop(mcs, count):
    frames = [Frame(0, s, 0.0) for s in range(40)]
    burst, b = pack_burst(frames, TABLE.rate_bps(mcs), T_MAX)
    assert len(burst) == count and b == count * 8000
    assert b / TABLE.rate_bps(mcs) <= T_MAX


def test_pack_burst_empty_and_multicast_bits():
    assert pack_burst([], 65e6) == ([], 0)
    frames = [Frame(0, s, 0.0) for s in range(3)]
    _, b = pack_burst(frames, 65e6, extra_recipients=lambda f: 3)
    assert b == 3 * 4 * 8000


def _group(snr=1e4):
    rng = np.random.default_rng(2)
    h = (rng.standard_normal((3, 8, 1, 4)) + 1j * rng.standard_normal((3, 8, 1, 4))) * np.sqrt(snr / 2)
    k = make_user(0, seqs=range(10, 16))
    m1 = make_user(1, seqs=range(10, 12), next_seq=12)   # needs 12..15
    m2 = make_user(2, seqs=(), next_seq=14, cached=(15,))  # needs 14 only
    return h, [k, m1, m2]


def test_error_free_transact_delivers_burst_and_fills_caches():
    h, users = _group()
    d = SchedulerDecision(0, (0, 1, 2), 7)
    out = transact(d, users, h, h, TABLE)
    assert [f.seq for f in out.delivered] == list(range(10, 16))
    assert not out.errored and not out.lost and not users[0].retx_pending
    assert len(users[0].queue) == 0
    assert [f.seq for f in out.cached[1]] == [12, 13, 14, 15]
    assert [f.seq for f in out.cached[2]] == [14]
    assert out.bits == {0: 48_000, 1: 32_000, 2: 8_000}
    assert out.data_airtime <= T_MAX


def test_errors_retransmit_only_for_intended_then_drop():
    h, users = _group(snr=1e-3)   # far too weak for the forced MCS
    est = h * 1e4                 # stale estimate claims a strong channel
    d = SchedulerDecision(0, (0, 1), 7)
    out = transact(d, users, h, est, TABLE, error_model=True)
    assert len(out.errored) == 6 and users[0].retx_pending
    assert 1 not in out.cached and users[1].cache.occupancy == 0
    assert all(f.retx_count == 1 for f in users[0].queue.frames)
    for attempt in range(2, 4):
        out = transact(SchedulerDecision(0, (0,), 7, retransmission=True), users, h[:1], est[:1],
                       TABLE, error_model=True)
        assert all(f.retx_count == attempt for f in users[0].queue.frames)
    out = transact(SchedulerDecision(0, (0,), 7, retransmission=True), users, h[:1], est[:1],
                   TABLE, error_model=True)
    assert len(out.lost) == 6 and len(users[0].queue) == 0 and not users[0].retx_pending
