"""Independent reference implementations used by the unit and acceptance tests.

Nothing here calls the scheduler or the batched phy helpers; everything is
recomputed from the single-group reference functions and written-out
formulas.
"""

import math

import numpy as np

from omcast.phy import NO_TRANSMISSION, grouping_metric, multicast_precoder, select_mcs, user_rate
from omcast.queueing import Frame, UserState

OVERHEAD_US = dict(ndpa=68, ndp=48, fb=120, poll=44, pre=40, ack=32, req=28, sifs=16, difs=34,
                   slot=9, slots=7.5)


def slot_time(g, data_bits, rate_bps):
    o = OVERHEAD_US
    us = (o["ndpa"] + o["sifs"] + o["ndp"] + o["sifs"] + o["fb"]
          + (g - 1) * (o["poll"] + o["sifs"] + o["fb"]) + o["pre"]
          + g * (o["sifs"] + o["ack"]) + (g - 1) * o["req"] + o["difs"] + o["slots"] * o["slot"])
    return us * 1e-6 + data_bits / rate_bps


def needs(u: UserState, f: Frame):
    return f.content_id == u.content_id and f.seq >= u.next_seq and (f.content_id, f.seq) not in u.cache.entries


def candidate(k, users, channels, table, t_max=3e-3, multicast=True):
    """(group, mcs, burst, b, T) for intended user ``k`` under the frame exchange rules."""
    q = list(users[k].queue.frames)
    uni = select_mcs([user_rate(channels[k], multicast_precoder([channels[k]]))], table)
    fit = math.floor(t_max * table.rate_bps(max(uni, 0)) / 8000 + 1e-9)
    window = q[:fit]
    eligible = [s for s in range(len(users))
                if multicast and s != k and users[s].content_id == users[k].content_id
                and any(needs(users[s], f) for f in window)]
    eligible.sort(key=lambda s: (-grouping_metric(channels[k], channels[s]), s))
    group = [k] + eligible[:3]
    if len(group) == 1:
        mcs = uni
    else:
        pre = multicast_precoder([channels[s] for s in group])
        mcs = select_mcs([user_rate(channels[s], pre) for s in group], table)
    if mcs == NO_TRANSMISSION:
        return group, mcs, [], 0, slot_time(len(group), 0, table.rate_bps(0))
    rate = table.rate_bps(mcs)
    burst = []
    for f in q:
        if (len(burst) + 1) * f.size_bits / rate > t_max * (1 + 1e-12):
            break
        burst.append(f)
    b = sum(f.size_bits * (1 + sum(needs(users[s], f) for s in group[1:])) for f in burst)
    return group, mcs, burst, b, slot_time(len(group), len(burst) * 8000, rate)


def scheduling_objective(k, Z, T, b, V, beta, eps):
    """sum_j Z_j psi~_j - V eps T + V beta b with psi~_k = Z_k and -eps T for the rest."""
    total = 0.0
    for j, z in enumerate(Z):
        total += z * (z if j == k else -eps * T)
    return total - V * eps * T + V * beta * b


def brute_force_lo(users, channels, Z, table, V=1000.0, beta=4e-5, eps=1000.0, multicast=True):
    """Best objective, the set of maximizing intended users and every user's objective."""
    scores = {}
    for k, u in enumerate(users):
        if not u.queue.frames:
            continue
        _, _, _, b, T = candidate(k, users, channels, table, multicast=multicast)
        scores[k] = scheduling_objective(k, Z, T, b, V, beta, eps)
    if not scores:
        return None, set(), {}
    best = max(scores.values())
    tol = 1e-9 * (1 + abs(best))
    return best, {k for k, s in scores.items() if s >= best - tol}, scores


def drop_decision(Z_tilde, L, V=1000.0, beta=4e-5, v=125.0):
    """Enumerate d in {0, L}: maximize Z~ phi~(d) - V beta v d with phi~ = Z~ when dropping.

    Ties go to dropping, matching the inclusive threshold.
    """
    value = {0: 0.0, L: Z_tilde * Z_tilde - V * beta * v * L}
    if L == 0:
        return 0
    return L if value[L] >= value[0] else 0


def recursion_reference(Q, b, d, A, mu, omega, M, Z, T, eps):
    """One step of the queue and HOL recursions straight from their definitions."""
    Q_next = max(0, Q - b - d) + A
    psi_v = min(M, Z) if mu == 1 else -eps * T
    Zt = max(0.0, Z - psi_v)
    phi_v = min(M, Zt) if omega == 1 else 0.0
    Z_next = max(0.0, Zt - phi_v)
    return Q_next, psi_v, Zt, phi_v, Z_next


def micro_instance(rng, snr_db=(-10.0, 45.0)):
    """Random K<=4 instance with <=3 frames per queue and shared contents."""
    from conftest import make_user

    K = int(rng.integers(1, 5))
    users = []
    for k in range(K):
        content = int(rng.integers(0, 2))
        n = int(rng.integers(0, 4))
        next_seq = int(rng.integers(3, 9))
        seqs = list(range(next_seq - n, next_seq))
        cached = [s for s in range(next_seq, next_seq + 4) if rng.random() < 0.3]
        users.append(make_user(k, content, seqs, next_seq=next_seq, cached=cached))
    snr = 10 ** (rng.uniform(*snr_db, size=K) / 10)
    h = (rng.standard_normal((K, 4, 1, 4)) + 1j * rng.standard_normal((K, 4, 1, 4))) * np.sqrt(snr / 2)[:, None, None, None]
    Z = np.where([len(u.queue) > 0 for u in users], rng.uniform(0, 250, size=K), 0.0)
    if rng.random() < 0.2:
        Z = np.round(Z / 50) * 50   # force ties
    return users, h, Z
