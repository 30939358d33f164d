"""User capacity of the three schedulers at a small scale.

Binary search over K with 2 sessions of 5 s each, Case 2, 1 Mbps.  The
acceptance suite runs the same search with 10 sessions of 10 s.  Takes about
three minutes on one core.
"""

from dataclasses import replace

from omcast.sim import ScenarioConfig, find_capacity

base = ScenarioConfig(case=2, load_bps=1e6, duration_s=5.0, sessions=2)
for sched in ("lo", "mlwdf", "rr"):
    caps = []
    for mc in (True, False):
        K, _, probes = find_capacity(replace(base, scheduler=sched, multicast=mc), 20, 160)
        caps.append(K)
    print(f"{sched:6s} multicast {caps[0]:4d}   unicast {caps[1]:4d}")
