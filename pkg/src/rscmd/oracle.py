"""Naive reference implementations used to cross-check the production modules.

Nothing here imports the grouping, rates or optimizer logic; only the domain
types are shared.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from rscmd.grouping import GroupingResult
from rscmd.rates import BeamformerSet
from rscmd.scenario import Scenario


# --------------------------------------------------------------------------- grouping


def replay_grouping(r_ext, decode_layers: int) -> GroupingResult:
    """Greedy grouping replayed as one pass over the off-diagonal entries in descending order.

    Visiting the largest remaining entry and zeroing it is the same as walking
    a list sorted by value (ties: row-major order), so no matrix is mutated.
    """
    m = [[float(x) for x in row] for row in np.asarray(r_ext)]
    K = len(m)
    if any(len(row) != K for row in m):
        raise ValueError("r_ext must be square")
    if decode_layers < 1:
        raise ValueError("decode_layers must be >= 1")
    entries = [(-m[i][j], i * K + j, i, j) for i in range(K) for j in range(K) if i != j]
    entries.sort()
    order = {k: [k] for k in range(K)}
    visited = 0
    for neg, _, i, j in entries:
        if min(len(v) for v in order.values()) >= decode_layers:
            break
        if not -neg > 0:
            break
        visited += 1
        if len(order[i]) >= decode_layers:
            continue
        if j in order[i] or i in order[j]:
            continue
        order[i] = [j] + order[i]
    return GroupingResult.from_decodes([order[k] for k in range(K)], decode_layers, visited)


# --------------------------------------------------------------------------- rates


def straight_line_rates(scenario: Scenario, beams: BeamformerSet, grouping: GroupingResult):
    """Private and common rates in bit/s, one explicit loop per SINR term."""
    H = scenario.channel
    K = H.shape[1]
    B = scenario.config.bandwidth_hz
    wp, wc = beams.private, beams.common

    def gain(k, w):
        v = 0j
        for n in range(H.shape[0]):
            v += np.conj(H[n, k]) * w[n]
        return abs(v) ** 2

    private = np.zeros(K)
    common = np.zeros(K)
    for k in range(K):
        z = list(grouping.decodes[k])
        undecoded = 0.0
        for l in range(K):
            if l not in z:
                undecoded += gain(k, wc[:, l])
        other_private = 0.0
        for j in range(K):
            if j != k:
                other_private += gain(k, wp[:, j])
        if beams.private_active[k]:
            sinr = gain(k, wp[:, k]) / (other_private + undecoded + scenario.noise_w[k])
            private[k] = B * math.log2(1.0 + sinr)
    for i in range(K):
        if not beams.common_active[i]:
            continue
        best = math.inf
        for k in range(K):
            z = list(grouping.decodes[k])
            if i not in z:
                continue
            denom = scenario.noise_w[k]
            for j in range(K):
                denom += gain(k, wp[:, j])
            for l in range(K):
                if l not in z:
                    denom += gain(k, wc[:, l])
            for l in z[z.index(i) + 1:]:
                denom += gain(k, wc[:, l])
            best = min(best, B * math.log2(1.0 + gain(k, wc[:, i]) / denom))
        common[i] = best
    return private, common


# --------------------------------------------------------------------------- single user


def single_user_power(gain: float, noise_w: float, rate_bps: float, bandwidth_hz: float) -> float:
    """Minimum power ``(2^(R/B) - 1) sigma^2 / |h|^2`` meeting ``rate_bps`` on one link."""
    if not gain > 0 or not noise_w > 0:
        raise ValueError("gain and noise must be positive")
    return (2.0 ** (rate_bps / bandwidth_hz) - 1.0) * noise_w / gain


def single_user_ee(gain: float, noise_w: float, rate_bps: float, bandwidth_hz: float, circuit_w: float) -> float:
    return rate_bps / (single_user_power(gain, noise_w, rate_bps, bandwidth_hz) + circuit_w)


# --------------------------------------------------------------------------- grid search


@dataclass(frozen=True)
class GridSearchSpec:
    """Search grid for tiny instances.

    ``power_levels`` are relative per-beam weights; every weight tuple defines
    a ray along which the smallest feasible total power is found by bisection.
    ``angles`` uniform samples are added to the direction set when the channel
    is real with two antennas.
    """

    power_levels: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0, 4.0)
    angles: int = 24
    bisection_steps: int = 40
    qos_slack: float = 0.0

    def __post_init__(self):
        levels = np.asarray(self.power_levels, float)
        if levels.size == 0 or np.any(levels < 0) or not np.any(levels > 0):
            raise ValueError("power_levels must be non-empty, non-negative and not all zero")
        if self.angles < 0 or self.bisection_steps < 1:
            raise ValueError("angles must be >= 0 and bisection_steps >= 1")
        if not 0 <= self.qos_slack < 1:
            raise ValueError("qos_slack must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class GridSearchResult:
    feasible: bool
    ee: float
    power_w: float
    private: np.ndarray | None = None
    common: np.ndarray | None = None
    evaluated: int = 0


def candidate_directions(channel: np.ndarray, angles: int = 0) -> np.ndarray:
    """Unit vectors: MRT and zero-forcing per user, their sum and difference, optional angle samples."""
    H = np.asarray(channel, complex)
    N, K = H.shape
    dirs = [H[:, k] / np.linalg.norm(H[:, k]) for k in range(K)]
    if K > 1 and N >= K:
        pinv = np.linalg.pinv(H.conj().T)
        dirs += [pinv[:, k] / np.linalg.norm(pinv[:, k]) for k in range(K)]
    if K == 2:
        for s in (1.0, -1.0):
            v = dirs[0] + s * dirs[1]
            if np.linalg.norm(v) > 1e-9:
                dirs.append(v / np.linalg.norm(v))
    if N == 2 and angles and np.allclose(H.imag, 0):
        for a in np.linspace(0.0, math.pi, angles, endpoint=False):
            dirs.append(np.array([math.cos(a), math.sin(a)], complex))
    out = []
    for d in dirs:
        if not any(abs(abs(np.vdot(d, e)) - 1.0) < 1e-9 for e in out):
            out.append(d)
    return np.array(out).T


def _caps(gp, gc, noise, decodes, private_active, B):
    """Vectorized capacities for stacked gain tensors ``g[..., k, j]`` (receiver k, beam j)."""
    K = noise.size
    cap_p = np.zeros(gp.shape[:-1])
    cap_c = np.full(gp.shape[:-1], np.inf)
    for k in range(K):
        z = list(decodes[k])
        out = [l for l in range(K) if l not in z]
        undecoded = gc[..., k, out].sum(-1) if out else 0.0
        priv_total = gp[..., k, :].sum(-1)
        if private_active[k]:
            cap_p[..., k] = B * np.log2(1 + gp[..., k, k] / (priv_total - gp[..., k, k] + undecoded + noise[k]))
        for pos, i in enumerate(z):
            later = z[pos + 1:]
            extra = gc[..., k, later].sum(-1) if later else 0.0
            r = B * np.log2(1 + gc[..., k, i] / (priv_total + undecoded + extra + noise[k]))
            cap_c[..., i] = np.minimum(cap_c[..., i], r)
    cap_c[np.isinf(cap_c)] = 0.0
    return cap_p, cap_c


def grid_search_ee(scenario: Scenario, grouping: GroupingResult, targets_bps, budget_w: float,
                   spec: GridSearchSpec | None = None, private_active=None) -> GridSearchResult:
    """Best EE over a direction x power-ratio grid with exact minimum power per ray.

    ``targets_bps`` is the per-user total-rate target. A grid point is feasible
    when every user's private plus common capacity reaches its target (less
    ``qos_slack`` relative) within ``budget_w``. Only for ``K <= 2, N <= 2``.
    """
    spec = spec or GridSearchSpec()
    H = np.asarray(scenario.channel, complex)
    N, K = H.shape
    if K > 2 or N > 2:
        raise ValueError("grid search is limited to K <= 2 and N <= 2")
    cfg = scenario.config
    B, pc = cfg.bandwidth_hz, cfg.p_circ_w
    target = np.asarray(targets_bps, float) * (1.0 - spec.qos_slack)
    pa = np.ones(K, bool) if private_active is None else np.asarray(private_active, bool)
    noise = np.asarray(scenario.noise_w, float)
    dirs = candidate_directions(H, spec.angles)
    resp = np.abs(H.conj().T @ dirs) ** 2  # resp[k, d]: gain of user k along direction d

    n_beams = int(pa.sum()) + K
    levels = np.asarray(spec.power_levels, float)
    weights = np.array([w for w in itertools.product(levels, repeat=n_beams) if sum(w) > 0])
    weights /= weights.sum(axis=1, keepdims=True)
    priv_idx = np.flatnonzero(pa)

    n_priv = priv_idx.size
    combos = np.array(list(itertools.product(range(dirs.shape[1]), repeat=n_beams)))
    unit = np.transpose(resp[:, combos], (1, 0, 2))  # (combo, receiver, beam)

    def feasible(u, w, scale):
        g = u * (w * scale[:, None])[:, None, :]
        gp = np.zeros((len(g), K, K))
        gp[:, :, priv_idx] = g[:, :, :n_priv]
        cap_p, cap_c = _caps(gp, g[:, :, n_priv:], noise, grouping.decodes, pa, B)
        return np.all(cap_p + cap_c >= target[None, :], axis=1)

    best_power, best_row = math.inf, None
    evaluated = 0
    chunk = max(1, 200_000 // len(weights))
    for start in range(0, len(combos), chunk):
        ci = np.repeat(np.arange(start, min(start + chunk, len(combos))), len(weights))
        wi = np.tile(np.arange(len(weights)), len(ci) // len(weights))
        evaluated += len(ci)
        ok = feasible(unit[ci], weights[wi], np.full(len(ci), budget_w))
        if not ok.any():
            continue
        # every SINR grows under a common scaling, so each ray's feasible part is an interval
        ci, wi = ci[ok], wi[ok]
        u, w = unit[ci], weights[wi]
        lo, hi = np.zeros(len(ci)), np.full(len(ci), budget_w)
        for _ in range(spec.bisection_steps):
            mid = 0.5 * (lo + hi)
            good = feasible(u, w, mid)
            hi = np.where(good, mid, hi)
            lo = np.where(good, lo, mid)
        n = int(np.argmin(hi))
        if hi[n] < best_power:
            best_power, best_row = float(hi[n]), (ci[n], wi[n])
    if best_row is None:
        return GridSearchResult(False, 0.0, math.inf, evaluated=evaluated)
    combo, pw = combos[best_row[0]], weights[best_row[1]] * best_power
    wp = np.zeros((N, K), complex)
    for m, j in enumerate(priv_idx):
        wp[:, j] = math.sqrt(pw[m]) * dirs[:, combo[m]]
    wc = np.sqrt(pw[n_priv:])[None, :] * dirs[:, combo[n_priv:]]
    ee = float(np.sum(targets_bps)) / (best_power + pc)
    return GridSearchResult(True, ee, best_power, wp, wc, evaluated)
