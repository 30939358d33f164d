"""Multicast precoding and MCS choice for a growing group.

A four-antenna AP serves one user, then adds same-content users to the
group.  The common MCS follows the weakest member, so every extra member
costs PHY rate while each transmitted frame reaches more users.
"""

import numpy as np

from omcast import phy

cfg = phy.ChannelConfig()
table = phy.McsTable.default()
snr_db = [40.0, 34.0, 31.0, 45.0]
hs = [phy.draw_channel(k, seed=7, epoch=0, gain=10 ** (s / 10), config=cfg).gains
      for k, s in enumerate(snr_db)]

print("group  min rate (b/s/Hz)  MCS  PHY Mbps  useful Mbps")
for size in range(1, 5):
    pre = phy.multicast_precoder(hs[:size])
    rates = [phy.user_rate(h, pre) for h in hs[:size]]
    mcs = phy.select_mcs(rates, table)
    mbps = table.phy_rate_mbps[mcs] if mcs >= 0 else 0.0
    print(f"{size:5d}  {min(rates):17.2f}  {mcs:3d}  {mbps:8.1f}  {size * mbps:11.1f}")

# the norm criterion ranks candidate members by channel alignment
metric = [phy.grouping_metric(hs[0], h) for h in hs[1:]]
print("alignment with user 0:", np.round(metric, 1))
