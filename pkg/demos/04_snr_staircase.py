"""Unicast MCS and throughput versus average SNR."""

import numpy as np

from omcast.sim import snr_sweep

for snr, mcs, phy_mbps, mac_mbps in snr_sweep(np.arange(0, 46, 3), draws=200):
    bar = "#" * int(mac_mbps)
    print(f"{snr:5.1f} dB  MCS {mcs:4.2f}  PHY {phy_mbps:5.1f}  MAC {mac_mbps:5.1f} Mbps  {bar}")
