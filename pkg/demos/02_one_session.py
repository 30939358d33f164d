"""One 10 s session: LO with and without opportunistic multicast.

Forty Case-2 users at 1 Mbps share ten contents.  With multicast on, users
that start a content later find part of it already cached and the AP
queues shrink.
"""

from omcast.sim import ScenarioConfig, cache_percentile, run_session

for multicast in (True, False):
    cfg = ScenarioConfig(case=2, n_users=40, load_bps=1e6, duration_s=10.0, multicast=multicast)
    l = run_session(cfg, seed=1)
    mode = "multicast" if multicast else "unicast"
    print(f"{mode:9s}  arrived {l.arrived.sum():6d}  delivered {l.delivered.sum():6d}  "
          f"cache-served {l.cache_served.sum():6d}  lost {l.lost.sum():4d}  late {l.late.sum():3d}")
    print(f"{'':9s}  busy {l.busy_s / l.duration_s:5.1%} of airtime, "
          f"{l.multicast_slots} multicast slots, mean delay {l.mean_delay_ms.mean():.1f} ms, "
          f"p99 cache {cache_percentile([l])} frames")
