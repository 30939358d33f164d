"""Synthetic MIMO-OFDM channels, multicast precoding, rates and MCS mapping.

Channels are stored as complex arrays of shape ``(N, Nr, Nt)`` (one
``Nr x Nt`` matrix per data subcarrier).  Batched helpers used by the
simulator stack users along a leading axis, ``(K, N, Nr, Nt)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "NO_TRANSMISSION",
    "DegenerateChannelError",
    "ChannelConfig",
    "ChannelMatrix",
    "Precoder",
    "McsTable",
    "NoiseModel",
    "ChannelSynthesizer",
    "draw_channel",
    "multicast_precoder",
    "user_rate",
    "grouping_metric",
    "select_mcs",
    "mcs_for_rates",
]

#: Returned by :func:`select_mcs` when not even MCS 0 can be supported.
NO_TRANSMISSION = -1

# stream identifiers mixed into the seed sequence
_CHANNEL_STREAM = 1
_CSI_ERROR_STREAM = 2


class DegenerateChannelError(ValueError):
    """A channel with zero Frobenius norm was passed to the precoder."""


@dataclass(frozen=True)
class ChannelConfig:
    """Dimensions and delay profile of the synthetic frequency-selective channel."""

    n_subcarriers: int = 52
    n_tx: int = 4
    n_rx: int = 1
    n_streams: int = 1
    n_taps: int = 4
    tap_decay_db: float = 3.0
    fft_size: int = 64
    epoch_slots: int = 1
    csi_nmse: float = 0.02
    precoder_normalization: str = "common"

    def __post_init__(self):
        if min(self.n_subcarriers, self.n_tx, self.n_rx, self.n_streams, self.n_taps) < 1:
            raise ValueError("channel dimensions and tap count must be >= 1")
        if self.n_streams != self.n_rx:
            raise ValueError("only N_s == N_r is supported (receive combiner U = I)")
        if self.n_subcarriers >= self.fft_size:
            raise ValueError("n_subcarriers must be smaller than fft_size")
        if self.n_taps > self.fft_size:
            raise ValueError("n_taps must not exceed fft_size")
        if self.epoch_slots < 1:
            raise ValueError("epoch_slots must be >= 1")
        if self.csi_nmse < 0:
            raise ValueError("csi_nmse must be >= 0")
        if self.precoder_normalization not in ("common", "per_subcarrier"):
            raise ValueError("precoder_normalization must be 'common' or 'per_subcarrier'")

    def power_delay_profile(self) -> np.ndarray:
        p = 10.0 ** (-self.tap_decay_db * np.arange(self.n_taps) / 10.0)
        return p / p.sum()

    def subcarrier_bins(self) -> np.ndarray:
        """FFT bin of each data subcarrier (DC excluded, split around it)."""
        n = self.n_subcarriers
        return np.concatenate([np.arange(-(n // 2), 0), np.arange(1, n - n // 2 + 1)])

    def tap_to_subcarrier(self) -> np.ndarray:
        """``(N, L)`` matrix mapping unit-power taps to subcarrier gains."""
        bins = self.subcarrier_bins()[:, None]
        lags = np.arange(self.n_taps)[None, :]
        phase = np.exp(-2j * np.pi * bins * lags / self.fft_size)
        return phase * np.sqrt(self.power_delay_profile())[None, :]


@dataclass(frozen=True)
class ChannelMatrix:
    gains: np.ndarray  # (N, Nr, Nt)
    user: int
    epoch: int

    @property
    def shape(self):
        return self.gains.shape


@dataclass(frozen=True)
class Precoder:
    matrices: np.ndarray  # (N, Nt, Ns)
    alpha: float


@dataclass(frozen=True)
class NoiseModel:
    """Noise power per receive dimension and the user's average SNR."""

    n0: float = 1.0
    snr_db: float = 30.0

    def __post_init__(self):
        if not self.n0 > 0:
            raise ValueError("n0 must be positive")

    @property
    def gain(self) -> float:
        """Large-scale gain such that per-entry channel power / n0 equals the SNR."""
        return self.n0 * 10.0 ** (self.snr_db / 10.0)


class McsTable:
    """Ordered MCS rows with a Shannon-gap link abstraction.

    A row with spectral efficiency ``e`` needs a mean capacity of
    ``log2(1 + gap * (2**e - 1))`` bits/s/Hz, i.e. an effective SNR of
    ``gap * (2**e - 1)``.
    """

    N_ROWS = 8

    def __init__(self, efficiency, phy_rate_mbps, gap_db: float = 3.0):
        eff = np.asarray(efficiency, dtype=float)
        rate = np.asarray(phy_rate_mbps, dtype=float)
        if eff.shape != (self.N_ROWS,) or rate.shape != (self.N_ROWS,):
            raise ValueError(f"MCS table needs exactly {self.N_ROWS} rows")
        if np.any(eff <= 0) or np.any(rate <= 0):
            raise ValueError("MCS efficiencies and rates must be positive")
        if gap_db < 0:
            raise ValueError("Shannon gap must be >= 0 dB")
        self.efficiency = eff
        self.phy_rate_mbps = rate
        self.gap_db = float(gap_db)
        gap = 10.0 ** (gap_db / 10.0)
        self.required_snr_db = 10.0 * np.log10(gap * (2.0 ** eff - 1.0))
        self.required_efficiency = np.log2(1.0 + gap * (2.0 ** eff - 1.0))
        for name, col in (("efficiency", eff), ("phy_rate_mbps", rate),
                          ("required_snr_db", self.required_snr_db)):
            if np.any(np.diff(col) <= 0):
                raise ValueError(f"MCS column {name} must be strictly increasing")
        self.index = np.arange(self.N_ROWS)

    @classmethod
    def default(cls) -> "McsTable":
        # 20 MHz, one spatial stream, 52 data subcarriers, 0.8 us guard interval
        rates = [6.5, 13.0, 19.5, 26.0, 39.0, 52.0, 58.5, 65.0]
        return cls([r / 13.0 for r in rates], rates)

    def __len__(self):
        return self.N_ROWS

    def rate_bps(self, mcs: int) -> float:
        return float(self.phy_rate_mbps[mcs]) * 1e6

    def rows(self):
        """(mcs_index, efficiency, required_snr_db, phy_rate_mbps) tuples."""
        return list(zip(self.index.tolist(), self.efficiency.tolist(),
                        self.required_snr_db.tolist(), self.phy_rate_mbps.tolist()))

    def __eq__(self, other):
        return (isinstance(other, McsTable)
                and np.array_equal(self.efficiency, other.efficiency)
                and np.array_equal(self.phy_rate_mbps, other.phy_rate_mbps)
                and self.gap_db == other.gap_db)


def _gains(channel) -> np.ndarray:
    if isinstance(channel, ChannelMatrix):
        return channel.gains
    return np.asarray(channel)


class ChannelSynthesizer:
    """Per-epoch block-fading channels for a fixed user population.

    The draw for epoch ``e`` is a pure function of ``(seed, e)`` and user
    ``k`` only consumes the ``k``-th block of that stream, so a user's
    realization does not depend on how many users are simulated.
    """

    def __init__(self, config: ChannelConfig, gains, seed: int):
        self.config = config
        self.gains = np.asarray(gains, dtype=float)
        self.seed = int(seed)
        self._map = config.tap_to_subcarrier()
        self._scale = np.sqrt(self.gains / 2.0)[:, None, None, None]

    @property
    def n_users(self) -> int:
        return self.gains.shape[0]

    def draw_epoch(self, epoch: int) -> np.ndarray:
        cfg = self.config
        rng = np.random.default_rng([self.seed, _CHANNEL_STREAM, int(epoch)])
        z = rng.standard_normal((self.n_users, cfg.n_taps, cfg.n_rx, cfg.n_tx, 2))
        taps = z.view(np.complex128)[..., 0] * self._scale
        # (N, L) x (K, L, Nr, Nt) -> (K, N, Nr, Nt)
        k = self.n_users
        return (self._map @ taps.reshape(k, cfg.n_taps, -1)).reshape(k, cfg.n_subcarriers, cfg.n_rx, cfg.n_tx)

    def estimate(self, channels: np.ndarray, users, epoch: int) -> np.ndarray:
        """Feedback estimate of ``channels`` (rows aligned with ``users``).

        Adds white estimation error of variance ``csi_nmse * gain`` per entry.
        """
        nmse = self.config.csi_nmse
        if nmse == 0:
            return channels
        out = np.array(channels, dtype=complex)
        for row, user in enumerate(users):
            rng = np.random.default_rng([self.seed, _CSI_ERROR_STREAM, int(epoch), int(user)])
            z = rng.standard_normal(channels.shape[1:] + (2,))
            out[row] += z.view(np.complex128)[..., 0] * math.sqrt(nmse * self.gains[user] / 2.0)
        return out


def draw_channel(user: int, seed: int, epoch: int, gain: float,
                 config: ChannelConfig = ChannelConfig()) -> ChannelMatrix:
    """Channel of a single user for one fading epoch.

    Identical to row ``user`` of :meth:`ChannelSynthesizer.draw_epoch` for
    a population in which that user has large-scale gain ``gain``.
    """
    rng = np.random.default_rng([int(seed), _CHANNEL_STREAM, int(epoch)])
    z = rng.standard_normal((user + 1, config.n_taps, config.n_rx, config.n_tx, 2))[user]
    taps = z.view(np.complex128)[..., 0] * math.sqrt(gain / 2.0)
    gains = (config.tap_to_subcarrier() @ taps.reshape(config.n_taps, -1)).reshape(
        config.n_subcarriers, config.n_rx, config.n_tx)
    return ChannelMatrix(gains, user, epoch)


def multicast_precoder(channels: Sequence, normalization: str = "common") -> Precoder:
    """Linear multicast precoder for a group of 1 to 4 users.

    ``W_n = alpha * sum_k H_{n,k}^H / ||H_{n,k}||_F^2``.  With the default
    ``"common"`` normalization a single ``alpha`` makes the largest
    per-subcarrier Frobenius norm exactly one.  ``"per_subcarrier"`` scales
    every ``W_n`` to unit norm instead (``alpha`` is then reported as nan);
    for one single-antenna user that is the per-tone matched filter.
    """
    hs = [_gains(h) for h in channels]
    if not 1 <= len(hs) <= 4:
        raise ValueError("multicast group size must be between 1 and 4")
    h = np.stack(hs)  # (S, N, Nr, Nt)
    norms = np.sum(np.abs(h) ** 2, axis=(2, 3))  # (S, N)
    if np.any(norms == 0):
        raise DegenerateChannelError("zero-norm channel in multicast group")
    w = np.sum(np.conj(np.swapaxes(h, 2, 3)) / norms[:, :, None, None], axis=0)
    w_norm = np.sqrt(np.sum(np.abs(w) ** 2, axis=(1, 2)))
    if normalization == "common":
        alpha = 1.0 / np.max(w_norm)
        return Precoder(w * alpha, float(alpha))
    if normalization == "per_subcarrier":
        if np.any(w_norm == 0):
            raise DegenerateChannelError("precoder vanishes on a subcarrier")
        return Precoder(w / w_norm[:, None, None], math.nan)
    raise ValueError(f"unknown precoder normalization {normalization!r}")


def user_rate(channel, precoder, noise: NoiseModel | float = 1.0) -> float:
    """Mean over subcarriers of ``log2 det(I + H W W^H H^H / N0)``."""
    h = _gains(channel)
    w = precoder.matrices if isinstance(precoder, Precoder) else np.asarray(precoder)
    n0 = noise.n0 if isinstance(noise, NoiseModel) else float(noise)
    g = h @ w  # (N, Nr, Ns)
    m = np.eye(h.shape[1]) + g @ np.conj(np.swapaxes(g, 1, 2)) / n0
    if h.shape[1] == 1:
        per_sc = np.log2(m[:, 0, 0].real)
    else:
        per_sc = np.linalg.slogdet(m)[1] / math.log(2.0)
    return float(max(np.mean(per_sc), 0.0))


def grouping_metric(channel_k, channel_s) -> float:
    """Norm criterion: mean over subcarriers of ``||H_k H_s^H||_F^2``."""
    a = _gains(channel_k)
    b = _gains(channel_s)
    prod = a @ np.conj(np.swapaxes(b, 1, 2))
    return float(np.mean(np.sum(np.abs(prod) ** 2, axis=(1, 2))))


def mcs_for_rates(rates, table: McsTable) -> np.ndarray:
    """Largest supported MCS per rate, :data:`NO_TRANSMISSION` where none is."""
    return np.searchsorted(table.required_efficiency, np.asarray(rates, dtype=float),
                           side="right") - 1


def select_mcs(rates, table: McsTable) -> int:
    """Common MCS for a multicast group: the smallest per-user MCS."""
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if rates.size == 0:
        raise ValueError("select_mcs needs at least one rate")
    return int(np.min(mcs_for_rates(rates, table)))


# -- batched helpers used on the simulator hot path ---------------------------

def subcarrier_power(channels: np.ndarray) -> np.ndarray:
    """``||H_{k,n}||_F^2`` for channels ``(K, N, Nr, Nt)``, shape ``(K, N)``."""
    k, n = channels.shape[:2]
    h = channels.reshape(k, n, -1)
    return np.einsum("knt,knt->kn", h, h.conj()).real


def unicast_rates(channels: np.ndarray, n0: float, normalization: str = "common",
                  power: np.ndarray | None = None) -> np.ndarray:
    """Matched-filter rate of every user, channels ``(K, N, 1, Nt)``.

    Same value as ``user_rate(h, multicast_precoder([h]))`` per user.
    """
    if power is None:
        power = subcarrier_power(channels)
    if normalization == "common":
        # alpha = min_n ||h_n||, so every tone sees the weakest tone's gain
        return np.log2(1.0 + power.min(axis=1) / n0)
    return np.log2(1.0 + power / n0).mean(axis=1)


def group_rates(channels: np.ndarray, n0: float, normalization: str = "common",
                realized: np.ndarray | None = None) -> np.ndarray:
    """Per-member rates under :func:`multicast_precoder` for ``(S, N, Nr, Nt)``.

    The precoder is built from ``channels``; rates are evaluated on
    ``realized`` when given (e.g. true channels vs. fed-back estimates).
    """
    if realized is None:
        if channels.shape[0] == 1 and channels.shape[2] == 1:
            power = subcarrier_power(channels)
            if not power.all():
                raise DegenerateChannelError("zero-norm channel in multicast group")
            return unicast_rates(channels, n0, normalization, power)
        realized = channels
    if channels.shape[2] == 1:
        h = channels[:, :, 0, :]  # (S, N, Nt)
        norms = (h.real ** 2 + h.imag ** 2).sum(axis=2)
        if not norms.all():
            raise DegenerateChannelError("zero-norm channel in multicast group")
        w = (h.conj() / norms[:, :, None]).sum(axis=0)  # (N, Nt)
        w_pow = (w.real ** 2 + w.imag ** 2).sum(axis=1)
        if normalization == "common":
            w = w * (1.0 / math.sqrt(w_pow.max()))
        else:
            w = w / np.sqrt(w_pow)[:, None]
        y = (realized[:, :, 0, :] * w).sum(axis=2)
        gain = y.real ** 2 + y.imag ** 2
        return np.maximum(np.log2(1.0 + gain / n0).mean(axis=1), 0.0)
    pre = multicast_precoder(list(channels), normalization)
    return np.array([user_rate(h, pre, n0) for h in realized])
