"""Exact SINR, rate, power and energy-efficiency evaluation for a fixed beamformer set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rscmd.grouping import GroupingResult
from rscmd.scenario import Scenario


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    """Private and common beamformers as N x K matrices (column k belongs to user k)."""

    private: np.ndarray
    common: np.ndarray
    private_active: np.ndarray
    common_active: np.ndarray

    def __post_init__(self):
        if self.private.shape != self.common.shape:
            raise ValueError("private and common beamformer matrices must share a shape")
        K = self.private.shape[1]
        if self.private_active.shape != (K,) or self.common_active.shape != (K,):
            raise ValueError("activity flags must have one entry per user")
        if not (np.all(np.isfinite(self.private)) and np.all(np.isfinite(self.common))):
            raise ValueError("beamformers must be finite")
        if np.any(self.private[:, ~self.private_active] != 0) or np.any(self.common[:, ~self.common_active] != 0):
            raise ValueError("inactive beamformers must be exactly zero")
        for arr in (self.private, self.common, self.private_active, self.common_active):
            arr.setflags(write=False)

    @classmethod
    def create(cls, private, common, private_active=None, common_active=None) -> "BeamformerSet":
        """Build a set, zeroing the columns of inactive beams."""
        private = np.array(private, dtype=complex)
        common = np.array(common, dtype=complex)
        K = private.shape[1]
        pa = np.ones(K, bool) if private_active is None else np.array(private_active, dtype=bool)
        ca = np.ones(K, bool) if common_active is None else np.array(common_active, dtype=bool)
        private[:, ~pa] = 0
        common[:, ~ca] = 0
        return cls(private, common, pa, ca)

    @classmethod
    def zeros(cls, n_tx: int, n_users: int, private_active=None, common_active=None) -> "BeamformerSet":
        z = np.zeros((n_tx, n_users), complex)
        return cls.create(z, z, private_active, common_active)

    @property
    def n_users(self) -> int:
        return self.private.shape[1]

    def private_powers(self) -> np.ndarray:
        return np.sum(np.abs(self.private) ** 2, axis=0)

    def common_powers(self) -> np.ndarray:
        return np.sum(np.abs(self.common) ** 2, axis=0)

    def scaled(self, factor: float) -> "BeamformerSet":
        return BeamformerSet.create(self.private * factor, self.common * factor, self.private_active, self.common_active)

    def without_private(self, users) -> "BeamformerSet":
        pa = self.private_active.copy()
        pa[list(users)] = False
        return BeamformerSet.create(self.private, self.common, pa, self.common_active)


@dataclass(frozen=True, eq=False)
class RateAllocation:
    """Per-user private and common rates in bit/s."""

    private_rate: np.ndarray
    common_rate: np.ndarray

    def __post_init__(self):
        if np.any(self.private_rate < 0) or np.any(self.common_rate < 0):
            raise ValueError("rates must be non-negative")

    @property
    def total(self) -> np.ndarray:
        return self.private_rate + self.common_rate

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.private_rate) + np.sum(self.common_rate))

    @property
    def common_share(self) -> float:
        """Common rate as a percentage of the total rate."""
        total = self.sum_rate
        return 100.0 * float(np.sum(self.common_rate)) / total if total > 0 else 0.0


def total_transmit_power(beams: BeamformerSet) -> float:
    return float(np.sum(beams.private_powers()) + np.sum(beams.common_powers()))


def received_gains(channel: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``G[k, j] = |h_k^H w_j|^2``."""
    return np.abs(channel.conj().T @ w) ** 2


@dataclass(frozen=True, eq=False)
class SinrTerms:
    """Signal and interference-plus-noise terms of every SINR in the system.

    ``common_pairs`` lists ``(decoder k, owner i)`` pairs; the arrays
    ``common_signal`` / ``common_denom`` are aligned with it.
    """

    private_signal: np.ndarray
    private_denom: np.ndarray
    common_pairs: tuple[tuple[int, int], ...]
    common_signal: np.ndarray
    common_denom: np.ndarray

    @property
    def private_sinr(self) -> np.ndarray:
        return self.private_signal / self.private_denom

    @property
    def common_sinr(self) -> np.ndarray:
        return self.common_signal / self.common_denom


def common_pairs(grouping: GroupingResult) -> tuple[tuple[int, int], ...]:
    return tuple((k, i) for k in range(grouping.n_users) for i in grouping.decodes[k])


def sinr_terms(scenario: Scenario, beams: BeamformerSet, grouping: GroupingResult) -> SinrTerms:
    H = scenario.channel
    noise = scenario.noise_w
    gp = received_gains(H, beams.private)
    gc = received_gains(H, beams.common)
    K = H.shape[1]
    p_sig = np.diag(gp).copy()
    residual_common = np.empty(K)
    for k in range(K):
        outside = np.ones(K, bool)
        outside[list(grouping.decodes[k])] = False
        residual_common[k] = gc[k, outside].sum()
    p_den = gp.sum(axis=1) - p_sig + residual_common + noise
    pairs = common_pairs(grouping)
    c_sig = np.empty(len(pairs))
    c_den = np.empty(len(pairs))
    for n, (k, i) in enumerate(pairs):
        z = grouping.decodes[k]
        later = list(z[z.index(i) + 1:])
        c_sig[n] = gc[k, i]
        c_den[n] = gp[k].sum() + noise[k] + residual_common[k] + gc[k, later].sum()
    return SinrTerms(p_sig, p_den, pairs, c_sig, c_den)


def common_sinr(scenario: Scenario, beams: BeamformerSet, grouping: GroupingResult, k: int, i: int) -> float:
    """SINR at user ``k`` when decoding the common message of user ``i``.

    Common messages of ``k``'s decode list that come after ``i`` in SIC order
    have not been cancelled yet and count as interference.
    """
    z = grouping.decodes[k]
    pos = grouping.sic_position(k, i)
    h = scenario.channel[:, k]
    gp = np.abs(h.conj() @ beams.private) ** 2
    gc = np.abs(h.conj() @ beams.common) ** 2
    outside = [l for l in range(len(gc)) if l not in z]
    denom = gp.sum() + scenario.noise_w[k] + gc[outside].sum() + gc[list(z[pos + 1:])].sum()
    return float(gc[i] / denom)


def private_sinr(scenario: Scenario, beams: BeamformerSet, grouping: GroupingResult, k: int) -> float:
    z = grouping.decodes[k]
    h = scenario.channel[:, k]
    gp = np.abs(h.conj() @ beams.private) ** 2
    gc = np.abs(h.conj() @ beams.common) ** 2
    outside = [l for l in range(len(gc)) if l not in z]
    denom = gp.sum() - gp[k] + gc[outside].sum() + scenario.noise_w[k]
    return float(gp[k] / denom)


def achievable_rates(scenario: Scenario, beams: BeamformerSet, grouping: GroupingResult) -> RateAllocation:
    """Private rate ``B log2(1 + SINR_p)``; common rate limited by the weakest designated decoder."""
    B = scenario.config.bandwidth_hz
    terms = sinr_terms(scenario, beams, grouping)
    private = B * np.log2(1.0 + terms.private_sinr)
    private[~beams.private_active] = 0.0
    common = np.full(scenario.n_users, np.inf)
    for (k, i), sinr in zip(terms.common_pairs, terms.common_sinr):
        common[i] = min(common[i], B * np.log2(1.0 + sinr))
    common[~beams.common_active] = 0.0
    return RateAllocation(private, common)


def energy_efficiency(rates: RateAllocation, transmit_power_w: float, circuit_power_w: float) -> float:
    """Delivered bits per joule."""
    if transmit_power_w < 0 or not circuit_power_w > 0:
        raise ValueError("transmit power must be >= 0 and circuit power > 0")
    return rates.sum_rate / (transmit_power_w + circuit_power_w)
