"""Synthetic single-cell downlink scenarios and unit conversions."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# log-distance model for d in km: PL_dB = PL_REF_DB + PL_SLOPE_DB * log10(d_km)
PL_REF_DB = 148.1
PL_SLOPE_DB = 37.6


def dbm_to_watts(level: float) -> float:
    """Convert a power level in dBm to watts."""
    level = float(level)
    if not math.isfinite(level):
        raise ValueError(f"power level must be finite, got {level}")
    return 10.0 ** ((level - 30.0) / 10.0)


def watts_to_dbm(power_w: float) -> float:
    if not power_w > 0:
        raise ValueError(f"power must be positive, got {power_w}")
    return 10.0 * math.log10(power_w) + 30.0


def pathloss_db(distance_m, min_distance_m: float = 10.0):
    d = np.asarray(distance_m, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d < min_distance_m):
        raise ValueError(f"distance must be finite and >= {min_distance_m} m, got {distance_m}")
    out = PL_REF_DB + PL_SLOPE_DB * np.log10(d / 1000.0)
    return float(out) if out.ndim == 0 else out


def pathloss(distance_m, min_distance_m: float = 10.0):
    """Linear large-scale power gain ``10**(-PL_dB/10)`` at ``distance_m`` meters.

    Accepts a scalar or an array. Distances inside the BS exclusion radius are
    rejected with ``ValueError``.
    """
    out = 10.0 ** (-np.asarray(pathloss_db(distance_m, min_distance_m)) / 10.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SystemConfig:
    """Physical-layer and deployment parameters. Defaults reproduce the reference setup."""

    n_tx: int = 8
    n_users: int = 12
    p_tr_dbm: float = 35.0
    p_circ_dbm: float = 37.0
    bandwidth_hz: float = 10e6
    noise_dbm: float = -102.0
    r_hd_bps: float = 8e6
    r_sd_bps: float = 4e6
    decode_layers: int = 2
    area_half_m: float = 250.0
    min_bs_distance_m: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n_tx < 1 or self.n_users < 1 or self.decode_layers < 1:
            raise ValueError("n_tx, n_users and decode_layers must all be >= 1")
        if not self.r_hd_bps > self.r_sd_bps > 0:
            raise ValueError("rate tiers must satisfy r_hd_bps > r_sd_bps > 0")
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth_hz must be positive")
        for name in ("p_tr_dbm", "p_circ_dbm", "noise_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0 <= self.min_bs_distance_m < self.area_half_m:
            raise ValueError("min_bs_distance_m must lie in [0, area_half_m)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def p_tr_w(self) -> float:
        return dbm_to_watts(self.p_tr_dbm)

    @property
    def p_circ_w(self) -> float:
        return dbm_to_watts(self.p_circ_dbm)

    @property
    def noise_w(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SystemConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class Scenario:
    """One channel realization: user positions, channel matrix (N x K), per-user noise."""

    config: SystemConfig
    positions: np.ndarray
    channel: np.ndarray
    noise_w: np.ndarray

    def __post_init__(self):
        K = self.config.n_users
        if self.channel.shape != (self.config.n_tx, K):
            raise ValueError(f"channel shape {self.channel.shape} != ({self.config.n_tx}, {K})")
        if not np.all(np.isfinite(self.channel)):
            raise ValueError("channel has non-finite entries")
        if np.any(np.linalg.norm(self.channel, axis=0) <= 0):
            raise ValueError("every channel column needs a positive norm")
        if self.positions.shape != (K, 2) or self.noise_w.shape != (K,):
            raise ValueError("positions must be (K, 2) and noise_w must be (K,)")
        if np.any(self.noise_w <= 0):
            raise ValueError("noise powers must be positive")
        for arr in (self.positions, self.channel, self.noise_w):
            arr.setflags(write=False)

    @property
    def n_tx(self) -> int:
        return self.config.n_tx

    @property
    def n_users(self) -> int:
        return self.config.n_users

    @property
    def distances(self) -> np.ndarray:
        return np.hypot(self.positions[:, 0], self.positions[:, 1])

    @property
    def channel_gains(self) -> np.ndarray:
        """Squared column norms ``||h_k||^2``."""
        return np.sum(np.abs(self.channel) ** 2, axis=0)

    @classmethod
    def from_channel(cls, channel, noise_w, config: SystemConfig | None = None, positions=None) -> "Scenario":
        """Wrap a hand-built channel matrix, e.g. for tests and oracles."""
        channel = np.array(channel, dtype=complex)
        if channel.ndim == 1:
            channel = channel.reshape(-1, 1)
        n, k = channel.shape
        if config is None:
            config = SystemConfig(n_tx=n, n_users=k)
        elif (config.n_tx, config.n_users) != (n, k):
            config = config.replace(n_tx=n, n_users=k)
        noise = np.broadcast_to(np.asarray(noise_w, dtype=float), (k,)).copy()
        if positions is None:
            positions = np.zeros((k, 2))
        return cls(config, np.array(positions, dtype=float), channel, noise)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "x", "y", "distance", "channel_gain"])
            for k, ((x, y), d, g) in enumerate(zip(self.positions, self.distances, self.channel_gains)):
                writer.writerow([k, repr(float(x)), repr(float(y)), repr(float(d)), repr(float(g))])


def _sample_positions(rng: np.random.Generator, n: int, half: float, r_min: float) -> np.ndarray:
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform(-half, half, size=(2 * (n - len(out)) + 4, 2))
        cand = cand[np.hypot(cand[:, 0], cand[:, 1]) >= r_min]
        out = np.vstack([out, cand])
    return out[:n]


def rayleigh_vectors(rng: np.random.Generator, n_tx: int, n_users: int) -> np.ndarray:
    """i.i.d. CN(0, 1) entries, shape (n_tx, n_users)."""
    return (rng.standard_normal((n_tx, n_users)) + 1j * rng.standard_normal((n_tx, n_users))) / math.sqrt(2.0)


def generate_scenario(config: SystemConfig) -> Scenario:
    """Drop users uniformly in the square (outside the exclusion disk) and draw Rayleigh channels."""
    rng = np.random.default_rng(config.seed)
    positions = _sample_positions(rng, config.n_users, config.area_half_m, config.min_bs_distance_m)
    dist = np.hypot(positions[:, 0], positions[:, 1])
    gain = np.atleast_1d(pathloss(dist, config.min_bs_distance_m))
    channel = np.sqrt(gain)[None, :] * rayleigh_vectors(rng, config.n_tx, config.n_users)
    noise = np.full(config.n_users, config.noise_w)
    return Scenario(config, positions, channel, noise)


def load_config(path: str | Path) -> SystemConfig:
    return SystemConfig.from_json(path)
