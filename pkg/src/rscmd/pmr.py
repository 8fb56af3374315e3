"""Scheduled private-message removal (PMR).

Starting from the all-HD optimum, repeatedly demote the HD user with the
smallest non-zero private rate (that also carries a common rate) to SD service,
take its private-beam power out of the budget and re-optimize.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from rscmd.grouping import GroupingResult
from rscmd.optimizer import OptimizerOptions, QosPartition, Solution, solve_ee_max
from rscmd.scenario import Scenario


@dataclass(frozen=True, eq=False)
class PmrState:
    partition: QosPartition
    p_avail: float
    private_active: np.ndarray
    solution: Solution


@dataclass(frozen=True, eq=False)
class PmrEvent:
    event_index: int
    removed_user: int
    removed_power_w: float
    p_avail_before_w: float
    p_avail_after_w: float
    solution_after: Solution

    @property
    def sd_count(self) -> int:
        return self.event_index


@dataclass(frozen=True, eq=False)
class PmrTrace:
    baseline: Solution
    events: tuple[PmrEvent, ...]
    initial_p_avail: float
    terminal_is_sdma: bool
    stop_reason: str
    partitions: tuple[QosPartition, ...] = field(default=())

    @property
    def solutions(self) -> list[Solution]:
        """Baseline followed by every post-event solution."""
        return [self.baseline] + [e.solution_after for e in self.events]

    @property
    def p_avail(self) -> list[float]:
        return [self.initial_p_avail] + [e.p_avail_after_w for e in self.events]

    @property
    def feasible(self) -> bool:
        return self.baseline.feasible

    def to_csv(self, path) -> None:
        write_trace_csv(self, path)


TRACE_HEADER = ["event", "removed_user", "removed_power_w", "p_avail_w", "ee_bit_per_j", "sum_common_rate_bps",
                "sum_private_rate_bps", "common_rate_share", "sd_count"]


def trace_rows(trace: PmrTrace) -> list[list]:
    rows = []
    entries = [(0, "", 0.0, trace.initial_p_avail, trace.baseline)]
    entries += [(e.event_index, e.removed_user, e.removed_power_w, e.p_avail_after_w, e.solution_after)
                for e in trace.events]
    for n, user, removed, p_avail, sol in entries:
        r = sol.rates
        rows.append([n, user, repr(float(removed)), repr(float(p_avail)), repr(float(sol.ee)),
                     repr(float(r.common_rate.sum())), repr(float(r.private_rate.sum())),
                     repr(float(r.common_share)), len(trace.partitions[n].sd_users) if trace.partitions else n])
    return rows


def write_trace_csv(trace: PmrTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        w.writerows(trace_rows(trace))


def select_pmr_candidate(solution: Solution, partition: QosPartition, eps_rate: float) -> int | None:
    """HD user with the smallest private rate among those with both rates above ``eps_rate``."""
    p = solution.rates.private_rate
    c = solution.rates.common_rate
    candidates = [k for k in sorted(partition.hd_users) if p[k] > eps_rate and c[k] > eps_rate]
    if not candidates:
        return None
    return min(candidates, key=lambda k: (p[k], k))


def apply_pmr(state: PmrState, user: int) -> tuple[PmrState, float]:
    """Demote ``user`` to SD and shrink the budget by its private-beam power.

    Returns the new state (its ``solution`` is still the pre-removal one) and
    the removed power.
    """
    if user not in state.partition.hd_users or not state.private_active[user]:
        raise ValueError(f"user {user} is not an HD user with an active private message")
    removed = float(state.solution.beams.private_powers()[user])
    active = state.private_active.copy()
    active[user] = False
    return PmrState(state.partition.demote(user), state.p_avail - removed, active, state.solution), removed


def run_pmr_schedule(scenario: Scenario, grouping: GroupingResult, options: OptimizerOptions | None = None,
                     p_avail_w: float | None = None, max_events: int | None = None) -> PmrTrace:
    """Baseline optimization followed by PMR events until no candidate remains.

    Each re-optimization is warm-started from the previous optimum with the
    removed private beam switched off. An infeasible re-optimization truncates
    the trace (``stop_reason="infeasible"``).
    """
    options = options or OptimizerOptions()
    cfg = scenario.config
    K = scenario.n_users
    p0 = cfg.p_tr_w if p_avail_w is None else float(p_avail_w)
    eps_rate = options.eps_rate_rel * cfg.r_sd_bps
    partition = QosPartition.all_hd(K)
    baseline = solve_ee_max(scenario, grouping, partition, p0, options)
    if not baseline.feasible:
        return PmrTrace(baseline, (), p0, False, "baseline_infeasible", (partition,))

    state = PmrState(partition, p0, np.ones(K, bool), baseline)
    events: list[PmrEvent] = []
    partitions = [partition]
    reason = "no_candidate"
    while max_events is None or len(events) < max_events:
        user = select_pmr_candidate(state.solution, state.partition, eps_rate)
        if user is None:
            break
        before = state.p_avail
        nxt, removed = apply_pmr(state, user)
        sol = solve_ee_max(scenario, grouping, nxt.partition, nxt.p_avail, options,
                           private_active=nxt.private_active, initial=state.solution.beams)
        if not sol.feasible:
            reason = "infeasible"
            break
        state = PmrState(nxt.partition, nxt.p_avail, nxt.private_active, sol)
        partitions.append(nxt.partition)
        events.append(PmrEvent(len(events) + 1, user, removed, before, nxt.p_avail, sol))
    else:
        reason = "max_events"
    terminal = bool(events) and not np.any(state.private_active)
    return PmrTrace(baseline, tuple(events), p0, terminal, reason, tuple(partitions))
