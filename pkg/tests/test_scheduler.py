import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from omcast.phy import McsTable
from omcast.queueing import Frame, UserQueue
from omcast.scheduler import (LoParams, RoundRobin, SchedulingView, baseline_deadline_drop,
                              drop_frames, form_group, lo_drop, lo_score, lo_select, mlwdf_priority,
                              mlwdf_select, z_max)

from conftest import make_user
from oracles import brute_force_lo, micro_instance, drop_decision

TABLE = McsTable.default()
P = LoParams()


def view(users, h, Z, multicast=True):
    return SchedulingView(users, h, Z, TABLE, multicast=multicast)


def strong(K, n_sub=4, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((K, n_sub, 1, 4)) + 1j * rng.standard_normal((K, n_sub, 1, 4))) * 300


# -- lo_score / z_max / lo_drop ------------------------------------------------

def test_lo_score_examples():
    assert lo_score(100, 50, 1000, 1000, 0.002, 4e-5, 12000) == pytest.approx(8380)
    assert lo_score(50, 100, 1000, 1000, 0.002, 4e-5, 24000) == pytest.approx(1260)
    assert lo_score(0, 50, 1000, 1000, 0.002, 4e-5, 0) == pytest.approx(-2100)


def test_z_max_examples():
    assert z_max(P) == 200.0
    assert z_max(LoParams(L_max=32000)) == 400.0
    assert z_max(LoParams(V=4000)) == 400.0   # V v = 5e5


@pytest.mark.parametrize("zt, dropped", [(250, 8000), (150, 0), (200, 8000)])
def test_lo_drop_examples(zt, dropped):
    assert lo_drop(zt, 8000, P) == dropped


@given(st.floats(0, 199.99), st.integers(1, 8000))
def test_lo_drop_below_unit_threshold_never_drops_single_bit_units(zt, L):
    # Z~ below sqrt(V beta v L) keeps everything; threshold grows with L
    if zt * zt < P.V * P.beta * P.v * L:
        assert lo_drop(zt, L, P) == 0


@given(st.floats(0, 400), st.sampled_from([0, 8000, 16000]))
def test_lo_drop_matches_enumeration(zt, L):
    assert lo_drop(zt, L, P) == drop_decision(zt, L)


def test_drop_unit_is_one_frame_by_default():
    q = UserQueue()
    for s in range(5):
        q.frames.append(Frame(0, s, s * 0.001))
        q.Q += 8000
    # 1 ms spacing: 4 frames needed to move the HOL by more than 3 ms, capped by L_max
    assert drop_frames(q, P) == 1
    assert drop_frames(q, LoParams(L_max=64000)) == 4


def test_baseline_deadline_drop():
    q1, q2, q3 = UserQueue(), UserQueue(), UserQueue()
    q1.frames.extend([Frame(0, 0, 0.0), Frame(0, 1, 0.05)])
    q2.frames.append(Frame(0, 0, 0.002))
    assert baseline_deadline_drop([q1, q2, q3], 200.0, 0.201) == [1, 0, 0]


# -- form_group ----------------------------------------------------------------

def test_unicast_when_no_one_shares_content():
    users = [make_user(0, 0, range(3)), make_user(1, 1, (), next_seq=0)]
    v = view(users, strong(2), np.zeros(2))
    assert form_group(0, v, users[0].queue.head(3)) == (0,)


def test_top_three_by_metric():
    base = np.zeros((6, 1, 1, 4), complex)
    base[:, 0, 0, 0] = 1.0
    base[1:, 0, 0, 1] = [0.0, 3.0, 1.0, 2.0, 0.5]   # metric grows with first entry only
    base[1:, 0, 0, 0] = [0.2, 0.9, 0.5, 0.7, 0.8]
    users = [make_user(0, 0, range(5, 8))] + [make_user(s, 0, (), next_seq=0) for s in range(1, 6)]
    v = view(users, base, np.zeros(6))
    assert form_group(0, v, users[0].queue.head(3)) == (0, 2, 5, 4)


def test_metric_ties_go_to_lower_index_under_permutation():
    h = np.zeros((5, 1, 1, 4), complex)
    h[:, 0, 0, 0] = 1.0
    for perm in itertools.permutations(range(1, 5)):
        users = [make_user(0, 0, range(5, 8))] + [make_user(s, 0, (), next_seq=0) for s in range(1, 5)]
        v = view(users, h[[0, *perm]], np.zeros(5))
        assert form_group(0, v, users[0].queue.head(3)) == (0, 1, 2, 3)


def test_users_holding_the_window_are_not_eligible():
    users = [make_user(0, 0, range(5, 8)),
             make_user(1, 0, (), next_seq=8),                 # already past the window
             make_user(2, 0, (), next_seq=5, cached=(5, 6, 7)),
             make_user(3, 0, (), next_seq=7)]
    v = view(users, strong(4), np.zeros(4))
    assert form_group(0, v, users[0].queue.head(3)) == (0, 3)


# -- selection -----------------------------------------------------------------

def test_lo_prefers_the_larger_score():
    users = [make_user(0, 0, range(5, 8)), make_user(1, 1, range(5, 8))]
    v = view(users, strong(2), np.array([100.0, 50.0]))
    assert lo_select(v, P).intended == 0


def test_lo_selects_only_nonempty_queue_and_idles_when_empty():
    users = [make_user(0, 0, ()), make_user(1, 1, range(2))]
    assert lo_select(view(users, strong(2), np.array([0.0, 5.0])), P).intended == 1
    empty = [make_user(0, 0, ()), make_user(1, 1, ())]
    assert lo_select(view(empty, strong(2), np.zeros(2)), P).idle


def test_pending_retransmission_wins():
    users = [make_user(k, k, range(3)) for k in range(4)]
    users[3].retx_pending = True
    users[3].queue.frames[0].retx_count = 1
    Z = np.array([190.0, 180.0, 170.0, 1.0])
    for select in (lambda v: lo_select(v, P), mlwdf_select, RoundRobin().select):
        d = select(view(users, strong(4), Z))
        assert d.intended == 3 and d.retransmission and d.group == (3,)


def test_mlwdf_priority_examples():
    assert mlwdf_priority([100, 50], [1, 1]) == 0
    assert mlwdf_priority([100, 50], [1, 3]) == 1
    assert mlwdf_priority([50, 100], [2, 1]) == 1     # equal product, larger Z wins
    users = [make_user(0, 0, ()), make_user(1, 1, ())]
    assert mlwdf_select(view(users, strong(2), np.zeros(2))).idle


def test_round_robin_examples():
    rr = RoundRobin(cursor=1)   # user 2 in one-based terms
    assert rr.next_user([True, False, True, False]) == 2
    rr = RoundRobin()
    assert [rr.next_user([True, False, False]) for _ in range(3)] == [0, 0, 0]
    rr = RoundRobin(cursor=2)
    assert rr.next_user([False] * 4) is None and rr.cursor == 2


# -- structure and brute force ---------------------------------------------------

@given(st.integers(0, 2**32 - 1), st.sampled_from(["lo", "mlwdf", "rr"]), st.booleans())
def test_decisions_are_structurally_valid(seed, name, multicast):
    rng = np.random.default_rng(seed)
    users, h, Z = micro_instance(rng)
    v = view(users, h, Z, multicast)
    d = {"lo": lambda: lo_select(v, P), "mlwdf": lambda: mlwdf_select(v),
         "rr": lambda: RoundRobin().select(v)}[name]()
    if d.idle:
        assert all(len(u.queue) == 0 for u in users)
        return
    assert d.group[0] == d.intended and len(set(d.group)) == len(d.group) <= 4
    assert d.mu(len(users)).sum() == 1
    assert sum(f.size_bits for f in d.frames) / TABLE.rate_bps(max(d.mcs, 0)) <= P.T_max * (1 + 1e-12)
    assert d.frames == users[d.intended].queue.head(len(d.frames))


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_lo_matches_brute_force(seed, multicast):
    rng = np.random.default_rng(seed)
    users, h, Z = micro_instance(rng)
    d = lo_select(view(users, h, Z, multicast), P)
    best, argmax, scores = brute_force_lo(users, h, Z, TABLE, multicast=multicast)
    if best is None:
        assert d.idle
        return
    assert d.intended in argmax
    assert scores[d.intended] == pytest.approx(best, rel=1e-12, abs=1e-9)
    # tie rule: larger Z, then lower index
    assert d.intended == min(argmax, key=lambda k: (-Z[k], k))
