"""Energy-efficiency maximization under exact per-tier QoS targets.

Outer loop: Dinkelbach on ``sum_rate / (P_tx + P_circ)``. Inner loop: successive
convex approximation of the SINR constraints, solved as a conic program with
cvxpy. With the rates pinned, both the EE and the feasibility subproblems only
need second-order cones.

Internally every channel is divided by the user's noise standard deviation (so
noise power is 1), rates are in bit/s/Hz and powers in watts; conversion back to
bit/s happens at the boundary.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from rscmd.grouping import GroupingResult
from rscmd.rates import (
    BeamformerSet,
    RateAllocation,
    SinrTerms,
    achievable_rates,
    sinr_terms,
    total_transmit_power,
)
from rscmd.scenario import Scenario

log = logging.getLogger(__name__)

class SubproblemError(RuntimeError):
    """The conic solver failed on an SCA subproblem."""

    def __init__(self, message: str, status: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.status = status
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class QosPartition:
    """Split of the users into HD (private + common) and SD (common only) tiers."""

    hd_users: frozenset
    sd_users: frozenset

    def __post_init__(self):
        object.__setattr__(self, "hd_users", frozenset(int(k) for k in self.hd_users))
        object.__setattr__(self, "sd_users", frozenset(int(k) for k in self.sd_users))
        if self.hd_users & self.sd_users:
            raise ValueError("a user cannot be both HD and SD")

    @classmethod
    def all_hd(cls, n_users: int) -> "QosPartition":
        return cls(frozenset(range(n_users)), frozenset())

    @property
    def n_users(self) -> int:
        return len(self.hd_users) + len(self.sd_users)

    def check(self, n_users: int) -> None:
        if self.hd_users | self.sd_users != set(range(n_users)):
            raise ValueError(f"partition must cover users 0..{n_users - 1} exactly")

    def demote(self, user: int) -> "QosPartition":
        if user not in self.hd_users:
            raise ValueError(f"user {user} is not an HD user")
        return QosPartition(self.hd_users - {user}, self.sd_users | {user})

    def targets(self, r_hd: float, r_sd: float) -> np.ndarray:
        K = self.n_users
        return np.array([r_hd if k in self.hd_users else r_sd for k in range(K)], dtype=float)


SURROGATES = ("tangent", "amgm")


@dataclass(frozen=True)
class OptimizerOptions:
    eps_dink: float = 1e-4
    eps_sca: float = 1e-5
    max_outer: int = 30
    max_inner: int = 50
    eps_floor: float = 1e-10
    eps_qos_rel: float = 1e-6
    eps_rate_rel: float = 1e-3
    eps_pow: float = 1e-8
    max_feasibility_iter: int = 60
    init_power_fraction: float = 0.5
    solver: str = "CLARABEL"
    solver_tol: float = 1e-6
    surrogate: str = "tangent"
    debug_csv: str | None = None

    def __post_init__(self):
        if self.surrogate not in SURROGATES:
            raise ValueError(f"surrogate must be one of {SURROGATES}")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be >= 1")
        if not 0 < self.init_power_fraction <= 1:
            raise ValueError("init_power_fraction must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class SlackState:
    """SINR slacks ``t`` and interference-plus-noise bounds ``beta``.

    ``beta_c`` is aligned with ``rscmd.rates.common_pairs(grouping)``.
    """

    t_p: np.ndarray
    t_c: np.ndarray
    beta_p: np.ndarray
    beta_c: np.ndarray


@dataclass(frozen=True)
class FeasibilityReport:
    qos_residual_bps: float
    rate_excess_bps: float
    power_excess_rel: float
    sinr_shortfall_rel: float
    feasible: bool
    status: str
    stage: str = ""


@dataclass(frozen=True)
class IterationRecord:
    outer: int
    inner: int
    lam: float
    objective: float
    ee: float
    sum_common_rate: float
    transmit_power: float
    max_residual: float


@dataclass(frozen=True, eq=False)
class Solution:
    beams: BeamformerSet
    rates: RateAllocation
    slacks: SlackState
    lam: float
    ee: float
    transmit_power: float
    p_avail: float
    dinkelbach_residual: float
    report: FeasibilityReport
    outer_iterations: int
    inner_iterations: int
    lambda_history: tuple[float, ...] = ()
    history: tuple[IterationRecord, ...] = ()
    surrogate_history: tuple[tuple[float, ...], ...] = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.report.feasible

    @property
    def status(self) -> str:
        return self.report.status


def dinkelbach_step(sum_rate: float, transmit_power: float, circuit_power: float) -> float:
    """Dinkelbach coefficient: efficiency of the previous iterate."""
    return sum_rate / (transmit_power + circuit_power)


# --------------------------------------------------------------------------- model


class _Normalized:
    """Noise-normalized real-valued view of a scenario."""

    def __init__(self, scenario: Scenario, grouping: GroupingResult):
        self.scenario = scenario
        self.grouping = grouping
        self.N = scenario.n_tx
        self.K = scenario.n_users
        g = scenario.channel / np.sqrt(scenario.noise_w)[None, :]
        gr, gi = g.real, g.imag
        # A[k] @ [Re w; Im w] = [Re h_k^H w, Im h_k^H w]
        self.A = np.stack([np.stack([np.r_[gr[:, k], gi[:, k]], np.r_[-gi[:, k], gr[:, k]]]) for k in range(self.K)])
        self.pairs = tuple((k, i) for k in range(self.K) for i in grouping.decodes[k])

    @staticmethod
    def to_real(w: np.ndarray) -> np.ndarray:
        return np.vstack([w.real, w.imag])

    def to_complex(self, x: np.ndarray) -> np.ndarray:
        return x[: self.N] + 1j * x[self.N:]


@dataclass(frozen=True, eq=False)
class LinearizationPoint:
    """Anchor of one SCA step: beams plus exact SINRs and denominators there.

    Denominators are noise-normalized, so the ``beta`` values are >= 1.
    """

    beams: BeamformerSet
    t_p: np.ndarray
    t_c: np.ndarray
    beta_p: np.ndarray
    beta_c: np.ndarray
    pair_sinr: np.ndarray


def linearization_point(scenario: Scenario, beams: BeamformerSet, grouping: GroupingResult) -> LinearizationPoint:
    terms = sinr_terms(scenario, beams, grouping)
    noise = scenario.noise_w
    t_c = np.full(scenario.n_users, np.inf)
    for (k, i), s in zip(terms.common_pairs, terms.common_sinr):
        t_c[i] = min(t_c[i], s)
    beta_c = np.array([terms.common_denom[n] / noise[k] for n, (k, _) in enumerate(terms.common_pairs)])
    t_p = np.where(beams.private_active, terms.private_sinr, 0.0)
    return LinearizationPoint(beams, t_p, t_c, terms.private_denom / noise, beta_c, terms.common_sinr)


class ConvexSubproblem:
    """Parameterized SCA subproblem for a fixed scenario, grouping and active-beam pattern.

    ``mode="ee"`` maximizes ``sum(xi) - lam * (P + P_circ)`` with rates pinned to
    the QoS targets. ``mode="feasibility"`` minimizes a per-user shortfall
    ``s`` in ``(1 + t_p)(1 + t_c + s) >= 2^R``, weighted by ``2^-R``.
    """

    def __init__(self, model: _Normalized, private_active: np.ndarray, circuit_power: float, mode: str = "ee",
                 surrogate: str = "tangent"):
        if mode not in ("ee", "feasibility"):
            raise ValueError(f"unknown mode {mode!r}")
        if surrogate not in SURROGATES:
            raise ValueError(f"unknown surrogate {surrogate!r}")
        self.model = model
        self.mode = mode
        self.surrogate = surrogate
        self.private_active = np.asarray(private_active, bool)
        N2, K, P = 2 * model.N, model.K, len(model.pairs)
        pairs = model.pairs
        g = model.grouping

        self.Wp = cp.Variable((N2, K), name="Wp")
        self.Wc = cp.Variable((N2, K), name="Wc")
        self.t_p = cp.Variable(K, nonneg=True, name="t_p")
        self.t_c = cp.Variable(K, nonneg=True, name="t_c")
        self.b_p = cp.Variable(K, name="beta_p")
        self.b_c = cp.Variable(P, name="beta_c")

        self.q_p = cp.Parameter((2, K), name="q_p")
        self.c_p = cp.Parameter(K, name="c_p")
        self.u_p = cp.Parameter(K, nonneg=True, name="u_p")
        self.q_c = cp.Parameter((2, P), name="q_c")
        self.c_c = cp.Parameter(P, name="c_c")
        self.u_c = cp.Parameter(K, nonneg=True, name="u_c")
        self.lam = cp.Parameter(nonneg=True, name="lam")
        self.p_avail = cp.Parameter(nonneg=True, name="p_avail")
        self.target = cp.Parameter(K, nonneg=True, name="target")

        owner = np.zeros((K, P))
        for n, (_, i) in enumerate(pairs):
            owner[i, n] = 1.0
        self.root = cp.Parameter(K, nonneg=True, name="root")
        power = cp.sum_squares(self.Wp) + cp.sum_squares(self.Wc)
        # xi_p + xi_c == R with xi <= log2(1 + t) holds for some split iff
        # (1 + t_p)(1 + t_c) >= 2^R, a rotated cone
        if mode == "ee":
            cons = [cp.SOC(2 + self.t_p + self.t_c, cp.vstack([self.t_p - self.t_c, 2 * self.root]), axis=0)]
        else:
            self.short = cp.Variable(K, nonneg=True, name="shortfall")
            t_c = self.t_c + self.short
            cons = [cp.SOC(2 + self.t_p + t_c, cp.vstack([self.t_p - t_c, 2 * self.root]), axis=0)]
        cons += [
            power <= self.p_avail,
            self.t_p <= self.u_p,
            self.t_c <= self.u_c,
        ]
        removed = np.flatnonzero(~self.private_active)
        if removed.size:
            cons += [self.Wp[:, removed] == 0, self.t_p[removed] == 0]

        # received amplitudes: rows (2k, 2k+1) of R hold Re/Im of h_k^H w_j in column j
        a_stack = model.A.reshape(2 * K, N2)
        Rp = cp.Variable((2 * K, K), name="Rp")
        Rc = cp.Variable((2 * K, K), name="Rc")
        cons += [Rp == a_stack @ self.Wp, Rc == a_stack @ self.Wc]
        zp, zc = cp.vec(Rp, order="F"), cp.vec(Rc, order="F")

        def amp(k, j):
            return [j * 2 * K + 2 * k, j * 2 * K + 2 * k + 1]

        # iota_k bounds the interference every SINR of user k sees: other private
        # streams, undecoded common streams and noise
        iota = cp.Variable(K, name="iota")
        for k in range(K):
            z = g.decodes[k]
            terms = [amp(k, j) for j in range(K) if j != k and self.private_active[j]]
            outside = [amp(k, l) for l in range(K) if l not in z]
            parts = ([zp[sum(terms, [])]] if terms else []) + ([zc[sum(outside, [])]] if outside else [])
            expr = 1.0 + cp.sum_squares(cp.hstack(parts)) if parts else 1.0
            cons.append(expr <= iota[k])
        cons.append(iota <= self.b_p)
        for n, (k, i) in enumerate(pairs):
            z = g.decodes[k]
            extra = [amp(k, m) for m in z[z.index(i) + 1:]]
            parts = ([zp[amp(k, k)]] if self.private_active[k] else []) + ([zc[sum(extra, [])]] if extra else [])
            if parts:
                cons.append(iota[k] + cp.sum_squares(cp.hstack(parts)) <= self.b_c[n])
            else:
                cons.append(iota[k] <= self.b_c[n])

        # linearized |h^H w|^2 >= AM-GM majorant of t * beta
        sig_p = [zp[[amp(k, k)[0] for k in range(K)]], zp[[amp(k, k)[1] for k in range(K)]]]
        sig_c = [zc[[amp(k, i)[0] for k, i in pairs]], zc[[amp(k, i)[1] for k, i in pairs]]]
        lin_p = 2 * (cp.multiply(self.q_p[0], sig_p[0]) + cp.multiply(self.q_p[1], sig_p[1]))
        lin_c = 2 * (cp.multiply(self.q_c[0], sig_c[0]) + cp.multiply(self.q_c[1], sig_c[1]))
        t_pairs = owner.T @ self.t_c
        if surrogate == "tangent":
            # |a|^2 / beta is jointly convex, so its tangent plane at the anchor is a
            # global under-estimator: t <= 2 q.a - c beta implies |a|^2 >= t beta
            cons.append(self.t_p <= lin_p - cp.multiply(self.c_p, self.b_p))
            cons.append(t_pairs <= lin_c - cp.multiply(self.c_c, self.b_c))
        else:
            # linearized |a|^2 >= AM-GM majorant of t * beta
            self.a_p = cp.Parameter(K, nonneg=True, name="a_p")
            self.s_p = cp.Parameter(K, nonneg=True, name="s_p")
            self.a_c = cp.Parameter(P, nonneg=True, name="a_c")
            self.s_c = cp.Parameter(P, nonneg=True, name="s_c")
            cons.append(lin_p - self.c_p >= 0.5 * cp.square(cp.multiply(self.a_p, self.t_p))
                        + 0.5 * cp.square(cp.multiply(self.s_p, self.b_p)))
            cons.append(lin_c - self.c_c >= 0.5 * cp.square(cp.multiply(self.a_c, t_pairs))
                        + 0.5 * cp.square(cp.multiply(self.s_c, self.b_c)))

        if mode == "ee":
            objective = cp.sum(self.target) - self.lam * (power + circuit_power)
        else:
            self.weight = cp.Parameter(K, nonneg=True, name="weight")
            objective = -self.weight @ self.short
        self.power = power
        self.problem = cp.Problem(cp.Maximize(objective), cons)
        self.circuit_power = circuit_power
        self.frozen_rows = 0

    def set_point(self, point: LinearizationPoint, lam: float, p_avail: float, target: np.ndarray, eps_floor: float):
        """Load a linearization point into the parameters.

        Rows whose SINR at the anchor is below ``eps_floor`` are frozen: their
        slack is pinned to 0 and the surrogate constraint made vacuous.
        """
        m = self.model
        K, P = m.K, len(m.pairs)
        # received amplitudes at the anchor, noise-normalized
        yp = m.scenario.channel.conj().T @ point.beams.private / np.sqrt(m.scenario.noise_w)[:, None]
        yc = m.scenario.channel.conj().T @ point.beams.common / np.sqrt(m.scenario.noise_w)[:, None]
        sp = np.diag(yp)
        sc = np.array([yc[k, i] for k, i in m.pairs])
        t_c_pairs = np.array([point.t_c[i] for _, i in m.pairs])
        if self.surrogate == "tangent":
            q_p, c_p, u_p = self._tangent(sp, point.t_p, point.beta_p, eps_floor, self.private_active)
            q_c, c_c, u_pair = self._tangent(sc, t_c_pairs, point.beta_c, eps_floor, np.ones(P, bool))
        else:
            q_p, c_p, u_p, self.a_p.value, self.s_p.value = self._amgm(
                sp, point.t_p, point.beta_p, eps_floor, self.private_active)
            q_c, c_c, u_pair, self.a_c.value, self.s_c.value = self._amgm(
                sc, t_c_pairs, point.beta_c, eps_floor, np.ones(P, bool))
        self.frozen_rows = int(np.sum(u_p == 0) - np.sum(~self.private_active) + np.sum(u_pair == 0))
        # any SINR at user k is at most ||g_k||^2 * P; capping live rows there keeps the program well scaled
        cap = np.sum(m.A[:, 0, :] ** 2, axis=1) * float(p_avail) * 1.01 + 1.0
        u_p = np.minimum(u_p, cap)
        u_pair = np.minimum(u_pair, cap[[k for k, _ in m.pairs]])
        u_c = np.full(K, np.inf)
        for n, (_, i) in enumerate(m.pairs):
            u_c[i] = min(u_c[i], u_pair[n])
        self.q_p.value, self.c_p.value, self.u_p.value = q_p, c_p, u_p
        self.q_c.value, self.c_c.value, self.u_c.value = q_c, c_c, u_c
        self.lam.value = max(float(lam), 0.0)
        self.p_avail.value = float(p_avail)
        self.target.value = np.asarray(target, float)
        self.root.value = 2.0 ** (self.target.value / 2)
        if self.mode == "feasibility":
            self.weight.value = 2.0 ** -self.target.value

    @staticmethod
    def _tangent(amp, t, beta, eps_floor, active):
        """Tangent plane of ``|a|^2 / beta`` at the anchor; frozen rows get ``t <= 0``."""
        beta = np.maximum(np.asarray(beta, float), eps_floor)
        live = active & (np.asarray(t, float) >= eps_floor)
        q = np.where(live[None, :], np.vstack([amp.real, amp.imag]) / beta[None, :], 0.0)
        c = np.where(live, np.abs(amp) ** 2 / beta**2, 0.0)
        u = np.where(live, np.inf, 0.0)
        return q, c, u

    @staticmethod
    def _amgm(amp, t, beta, eps_floor, active):
        """``2 a_bar.a - |a_bar|^2 >= (theta t^2 + beta^2 / theta) / 2`` with ``theta = beta_bar / t_bar``.

        Frozen rows keep ``t <= 0`` and a vacuous cone (``c = -1``).
        """
        t = np.asarray(t, float)
        beta = np.maximum(np.asarray(beta, float), eps_floor)
        live = active & (t >= eps_floor)
        theta = np.where(live, np.maximum(t, eps_floor) / beta, 1.0)
        q = np.where(live[None, :], np.vstack([amp.real, amp.imag]), 0.0)
        c = np.where(live, np.abs(amp) ** 2, -1.0)
        u = np.where(live, np.inf, 0.0)
        return q, c, u, np.where(live, 1.0 / np.sqrt(theta), 0.0), np.where(live, np.sqrt(theta), 0.0)

    def solve(self, solver: str, tol: float) -> float:
        # interior-point runs occasionally stall just short of a tight tolerance;
        # retry looser, since every candidate is verified exactly afterwards anyway
        for attempt, tol_n in enumerate((tol, max(100 * tol, 1e-5))):
            kwargs = {}
            if solver.upper() == "CLARABEL":
                kwargs = dict(tol_gap_abs=tol_n, tol_gap_rel=tol_n, tol_feas=tol_n, max_iter=300)
            try:
                self.problem.solve(solver=solver, **kwargs)
                break
            except cp.error.SolverError as exc:
                if attempt == 1:
                    raise SubproblemError(str(exc), "solver_error") from exc
        status = self.problem.status
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            raise SubproblemError(f"subproblem status {status}", status)
        return float(self.problem.value)

    def candidate(self) -> tuple[BeamformerSet, np.ndarray, np.ndarray, SlackState]:
        m = self.model
        wp = m.to_complex(self.Wp.value)
        wc = m.to_complex(self.Wc.value)
        beams = BeamformerSet.create(wp, wc, self.private_active, np.ones(m.K, bool))
        slacks = SlackState(
            np.maximum(self.t_p.value, 0), np.maximum(self.t_c.value, 0), self.b_p.value.copy(), self.b_c.value.copy()
        )
        # the rate split is implicit in the cone; private takes what its slack supports
        target = self.target.value
        xi_p = np.where(self.private_active, np.minimum(np.log2(1 + slacks.t_p), target), 0.0)
        if self.mode == "ee":
            return beams, xi_p, target - xi_p, slacks
        return beams, xi_p, np.minimum(np.log2(1 + slacks.t_c), target - xi_p), slacks


def build_convex_subproblem(scenario: Scenario, grouping: GroupingResult, point: LinearizationPoint, lam: float,
                            partition: QosPartition, p_avail_w: float, mode: str = "ee",
                            options: OptimizerOptions | None = None) -> ConvexSubproblem:
    """Build and parameterize the convex surrogate around ``point``.

    ``lam`` is given in bit/J. The returned object exposes the cvxpy problem as
    ``.problem``; its objective is in noise-normalized units (bit/s/Hz and W).
    """
    options = options or OptimizerOptions()
    cfg = scenario.config
    model = _Normalized(scenario, grouping)
    sub = ConvexSubproblem(model, point.beams.private_active, cfg.p_circ_w, mode, options.surrogate)
    target = partition.targets(cfg.r_hd_bps, cfg.r_sd_bps) / cfg.bandwidth_hz
    sub.set_point(point, lam / cfg.bandwidth_hz, p_avail_w, target, options.eps_floor)
    return sub


# --------------------------------------------------------------------------- polish


@dataclass(frozen=True, eq=False)
class _Iterate:
    beams: BeamformerSet
    xi_p: np.ndarray  # bit/s/Hz
    xi_c: np.ndarray
    power: float
    point: LinearizationPoint
    slacks: SlackState | None = None

    @property
    def sum_rate(self) -> float:
        return float(self.xi_p.sum() + self.xi_c.sum())


def _capacities(scenario: Scenario, beams: BeamformerSet, grouping: GroupingResult):
    B = scenario.config.bandwidth_hz
    r = achievable_rates(scenario, beams, grouping)
    return r.private_rate / B, r.common_rate / B


def _split(xi_p, xi_c, cap_p, cap_c, target):
    """Rates meeting ``target`` exactly under the caps, closest to the solver's split."""
    p = np.minimum(np.clip(xi_p, 0, None), cap_p)
    c = target - p
    over = c > cap_c
    c = np.where(over, cap_c, c)
    p = np.where(over, target - cap_c, p)
    neg = c < 0
    c = np.where(neg, 0.0, c)
    p = np.where(neg, target, p)
    return p, c


def _polish(scenario, grouping, beams, xi_p, xi_c, target, p_avail, eps_qos):
    """Scale all beams up by the smallest factor >= 1 that makes ``target`` achievable.

    Every SINR grows with a common beam scaling, so this removes the small
    shortfalls left by the conic solver's tolerance. Returns ``None`` if the
    power budget does not allow it.
    """
    power = total_transmit_power(beams)

    def ok(c):
        cap_p, cap_c = _capacities(scenario, beams.scaled(c), grouping)
        return np.all(cap_p + cap_c >= target - eps_qos), cap_p, cap_c

    good, cap_p, cap_c = ok(1.0)
    if not good:
        c_max = math.sqrt(p_avail / power) if power > 0 else 1.0
        if c_max <= 1.0 or not ok(c_max)[0]:
            return None
        lo, hi = 1.0, min(c_max, 1.0 + 1e-6)
        while not ok(hi)[0]:
            lo, hi = hi, min(c_max, 1.0 + 4 * (hi - 1.0))
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if ok(mid)[0]:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-15:
                break
        _, cap_p, cap_c = ok(hi)
        beams = beams.scaled(hi)
    p, c = _split(xi_p, xi_c, cap_p, cap_c, target)
    return beams, p, c


def _make_iterate(scenario, grouping, beams, xi_p, xi_c, slacks=None) -> _Iterate:
    return _Iterate(beams, xi_p, xi_c, total_transmit_power(beams),
                    linearization_point(scenario, beams, grouping), slacks)


# --------------------------------------------------------------------------- init


def initial_beams(scenario: Scenario, grouping: GroupingResult, private_active, p_avail: float,
                  fraction: float = 0.5) -> BeamformerSet:
    """MRT private beams and group-matched common beams, equal power, ``fraction * p_avail`` in total."""
    H = scenario.channel
    K = scenario.n_users
    private_active = np.asarray(private_active, bool)
    unit = H / np.linalg.norm(H, axis=0)[None, :]
    wc = np.zeros_like(H)
    for i in range(K):
        d = unit[:, list(grouping.decoded_by[i])].sum(axis=1)
        if np.linalg.norm(d) < 1e-12:
            d = unit[:, i]
        wc[:, i] = d / np.linalg.norm(d)
    n_beams = int(private_active.sum()) + K
    amp = math.sqrt(fraction * p_avail / n_beams)
    return BeamformerSet.create(amp * unit, amp * wc, private_active, np.ones(K, bool))


# --------------------------------------------------------------------------- solve


class _DebugLog:
    def __init__(self, path):
        self.rows = [] if path else None
        self.path = path

    def add(self, *row):
        if self.rows is not None:
            self.rows.append(row)

    def flush(self):
        if self.rows is None:
            return
        with open(self.path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phase", "outer", "inner", "lambda", "objective", "max_residual"])
            w.writerows(self.rows)


def _report(scenario, grouping, it: _Iterate, target_bps, p_avail, options, status, stage="") -> FeasibilityReport:
    cfg = scenario.config
    B = cfg.bandwidth_hz
    eps_qos = options.eps_qos_rel * cfg.r_sd_bps
    rates = achievable_rates(scenario, it.beams, grouping)
    xi_p, xi_c = it.xi_p * B, it.xi_c * B
    qos = float(np.max(np.abs(xi_p + xi_c - target_bps)))
    excess = float(max(np.max(xi_p - rates.private_rate), np.max(xi_c - rates.common_rate), 0.0))
    pow_ex = max(it.power / p_avail - 1.0, 0.0)
    shortfall = 0.0
    if it.slacks is not None:
        sinr_p = it.point.t_p
        act = it.beams.private_active
        rel = (it.slacks.t_p[act] - sinr_p[act]) / np.maximum(it.slacks.t_p[act], 1.0)
        shortfall = float(max(np.max(rel, initial=0.0), 0.0))
    feasible = status == "optimal" and qos <= eps_qos and excess <= eps_qos and pow_ex <= options.eps_pow
    return FeasibilityReport(qos, excess, pow_ex, shortfall, feasible, status, stage)


def _max_residual(scenario, grouping, it: _Iterate, target_bps) -> float:
    B = scenario.config.bandwidth_hz
    rates = achievable_rates(scenario, it.beams, grouping)
    qos = np.max(np.abs((it.xi_p + it.xi_c) * B - target_bps))
    excess = max(np.max(it.xi_p * B - rates.private_rate), np.max(it.xi_c * B - rates.common_rate), 0.0)
    return float(max(qos, excess))


def _feasibility_phase(scenario, grouping, sub_f: ConvexSubproblem, start: _Iterate, target, p_avail,
                       options, debug) -> tuple[_Iterate | None, int]:
    """Shrink the weighted QoS shortfall until every target is met."""
    eps_qos = options.eps_qos_rel * scenario.config.r_sd_bps / scenario.config.bandwidth_hz
    it = start
    polished = _polish(scenario, grouping, it.beams, it.xi_p, it.xi_c, target, p_avail, 0.0)
    if polished is not None:
        return _make_iterate(scenario, grouping, *polished), 0
    prev = -np.inf
    for n in range(1, options.max_feasibility_iter + 1):
        sub_f.set_point(it.point, 0.0, p_avail, target, options.eps_floor)
        value = sub_f.solve(options.solver, options.solver_tol)
        beams, xi_p, xi_c, slacks = sub_f.candidate()
        debug.add("feasibility", 0, n, 0.0, value, float("nan"))
        log.debug("feasibility iter %d shortfall=%.6g", n, -value)
        polished = _polish(scenario, grouping, beams, xi_p, xi_c, target, p_avail, 0.0)
        if polished is not None:
            return _make_iterate(scenario, grouping, *polished), n
        it = _make_iterate(scenario, grouping, beams, xi_p, xi_c, slacks)
        if value - prev < 1e-6 * max(abs(value), 1e-3):
            return None, n
        prev = value
    return None, options.max_feasibility_iter


def solve_ee_max(scenario: Scenario, grouping: GroupingResult, partition: QosPartition, p_avail_w: float,
                 options: OptimizerOptions | None = None, private_active=None,
                 initial: BeamformerSet | None = None) -> Solution:
    """Maximize energy efficiency with every user's total rate pinned to its tier target.

    ``private_active`` defaults to the HD users; SD users without a private
    beam are served by their common message only. Never raises on
    infeasibility: the returned ``Solution.report`` carries the status
    (``optimal``, ``infeasible``, ``max_iterations`` or a solver status) and
    the stage that failed.
    """
    options = options or OptimizerOptions()
    if not p_avail_w > 0:
        raise ValueError("available transmit power must be positive")
    K = scenario.n_users
    partition.check(K)
    cfg = scenario.config
    B = cfg.bandwidth_hz
    p_circ = cfg.p_circ_w
    if private_active is None:
        private_active = np.array([k in partition.hd_users for k in range(K)])
    private_active = np.asarray(private_active, bool)
    target_bps = partition.targets(cfg.r_hd_bps, cfg.r_sd_bps)
    target = target_bps / B
    debug = _DebugLog(options.debug_csv)
    model = _Normalized(scenario, grouping)

    if initial is None:
        beams0 = initial_beams(scenario, grouping, private_active, p_avail_w, options.init_power_fraction)
    else:
        beams0 = BeamformerSet.create(initial.private, initial.common, private_active, np.ones(K, bool))
    cap_p, cap_c = _capacities(scenario, beams0, grouping)
    xi_p0, xi_c0 = _split(cap_p, cap_c, cap_p, cap_c, np.minimum(target, cap_p + cap_c))
    start = _make_iterate(scenario, grouping, beams0, xi_p0, xi_c0)

    def failed(it: _Iterate, status: str, stage: str, lam_hist=(), hist=(), sur=(), n_out=0, n_in=0, diag=None):
        debug.flush()
        rates = RateAllocation(it.xi_p * B, it.xi_c * B)
        rep = _report(scenario, grouping, it, target_bps, p_avail_w, options, status, stage)
        rep = FeasibilityReport(rep.qos_residual_bps, rep.rate_excess_bps, rep.power_excess_rel,
                                rep.sinr_shortfall_rel, False, status, stage)
        slacks = it.slacks or SlackState(it.point.t_p, it.point.t_c, it.point.beta_p, it.point.beta_c)
        lam = dinkelbach_step(rates.sum_rate, it.power, p_circ)
        return Solution(it.beams, rates, slacks, lam, lam, it.power, p_avail_w, float("nan"), rep, n_out, n_in,
                        tuple(lam_hist), tuple(hist), tuple(sur), diag or {})

    try:
        sub_f = ConvexSubproblem(model, private_active, p_circ, "feasibility", options.surrogate)
        anchor, n_feas = _feasibility_phase(scenario, grouping, sub_f, start, target, p_avail_w, options, debug)
    except SubproblemError as exc:
        return failed(start, exc.status, "feasibility")
    if anchor is None:
        return failed(start, "infeasible", "feasibility", diag={"feasibility_iterations": n_feas})

    sub = ConvexSubproblem(model, private_active, p_circ, "ee", options.surrogate)
    it = anchor
    lam = dinkelbach_step(it.sum_rate * B, it.power, p_circ)
    lam_hist = [lam]
    records: list[IterationRecord] = []
    surrogate_hist: list[tuple[float, ...]] = []
    n_inner_total = 0
    residual = float("nan")
    status = "max_iterations"
    frozen = 0
    solver_failures: list[tuple[int, int, str]] = []

    def objective(x: _Iterate, lam_bit_per_j: float) -> float:
        return x.sum_rate - lam_bit_per_j / B * (x.power + p_circ)

    def record(outer, inner, x, lam_now):
        # same arithmetic as the returned Solution, so the last record matches it bit for bit
        r = RateAllocation(x.xi_p * B, x.xi_c * B)
        ee = r.sum_rate / (x.power + p_circ)
        res = _max_residual(scenario, grouping, x, target_bps)
        records.append(IterationRecord(outer, inner, lam_now, objective(x, lam_now) * B, ee,
                                       float(np.sum(r.common_rate)), x.power, res))
        debug.add("ee", outer, inner, lam_now, objective(x, lam_now) * B, res)

    record(0, 0, it, lam)
    eps_qos = options.eps_qos_rel * cfg.r_sd_bps / B
    n_outer = 0
    for n_outer in range(1, options.max_outer + 1):
        obj_prev = objective(it, lam)
        scale = max(it.sum_rate, 1e-12)
        seq = [obj_prev * B]
        for inner in range(1, options.max_inner + 1):
            sub.set_point(it.point, lam / B, p_avail_w, target, options.eps_floor)
            frozen = max(frozen, sub.frozen_rows)
            try:
                sub.solve(options.solver, options.solver_tol)
            except SubproblemError as exc:
                # the current iterate is verified feasible; a stalled subproblem just ends this SCA pass
                solver_failures.append((n_outer, inner, exc.status))
                log.debug("subproblem failed at outer=%d inner=%d: %s", n_outer, inner, exc.status)
                break
            beams, xi_p, xi_c, slacks = sub.candidate()
            polished = _polish(scenario, grouping, beams, xi_p, xi_c, target, p_avail_w, 0.0)
            if polished is None:
                break
            cand = _make_iterate(scenario, grouping, *polished, slacks=slacks)
            obj_new = objective(cand, lam)
            if obj_new < obj_prev:
                break
            n_inner_total += 1
            it = cand
            record(n_outer, inner, it, lam)
            seq.append(obj_new * B)
            improved = obj_new - obj_prev
            obj_prev = obj_new
            if improved < options.eps_sca * scale:
                break
        surrogate_hist.append(tuple(seq))
        residual = (it.sum_rate - lam / B * (it.power + p_circ)) / max(it.sum_rate, 1e-12)
        lam = dinkelbach_step(it.sum_rate * B, it.power, p_circ)
        lam_hist.append(lam)
        if abs(residual) <= options.eps_dink:
            status = "optimal"
            break

    debug.flush()
    rates = RateAllocation(it.xi_p * B, it.xi_c * B)
    slacks = it.slacks or SlackState(it.point.t_p, it.point.t_c, it.point.beta_p, it.point.beta_c)
    report = _report(scenario, grouping, it, target_bps, p_avail_w, options, status, "" if status == "optimal" else "dinkelbach")
    ee = rates.sum_rate / (it.power + p_circ)
    return Solution(it.beams, rates, slacks, lam, ee, it.power, p_avail_w, float(residual), report, n_outer,
                    n_inner_total, tuple(lam_hist), tuple(records), tuple(surrogate_hist),
                    {"feasibility_iterations": n_feas, "frozen_rows": frozen,
                     "solver_failures": solver_failures})
