import math

import numpy as np
import pytest

from conftest import random_scenario
from rscmd.grouping import GroupingResult, build_grouping, form_groups
from rscmd.optimizer import QosPartition, solve_ee_max
from rscmd.oracle import (
    GridSearchSpec,
    candidate_directions,
    grid_search_ee,
    replay_grouping,
    single_user_ee,
    single_user_power,
    straight_line_rates,
)
from rscmd.rates import BeamformerSet
from rscmd.scenario import Scenario, SystemConfig


def test_single_user_formulas():
    # (2^0.8 - 1) * 1e-13 / 1e-12
    assert single_user_power(1e-12, 1e-13, 8e6, 10e6) == pytest.approx((2**0.8 - 1) * 0.1, rel=1e-15)
    ee = single_user_ee(1e-12, 1e-13, 8e6, 10e6, 5.0)
    assert ee == pytest.approx(8e6 / ((2**0.8 - 1) * 0.1 + 5.0), rel=1e-15)
    with pytest.raises(ValueError):
        single_user_power(0.0, 1e-13, 8e6, 10e6)


def test_replay_d1_and_validation():
    r = np.random.default_rng(0).random((4, 4))
    g = replay_grouping(r, 1)
    assert g.decodes == tuple((k,) for k in range(4))
    with pytest.raises(ValueError):
        replay_grouping(np.ones((2, 3)), 2)
    with pytest.raises(ValueError):
        replay_grouping(np.ones((2, 2)), 0)


def test_replay_matches_production_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(200):
        k = int(rng.integers(2, 7))
        r = rng.random((k, k))
        d = int(rng.integers(1, 4))
        assert replay_grouping(r, d) == form_groups(r, d)


def test_straight_line_single_link():
    sc = Scenario.from_channel([[2.0]], 1.0, SystemConfig(n_tx=1, n_users=1))
    b = BeamformerSet.create([[0.5]], [[0.0]])
    p, c = straight_line_rates(sc, b, GroupingResult.singletons(1))
    assert p[0] == pytest.approx(10e6 * math.log2(2.0), rel=1e-15) and c[0] == 0.0


def test_candidate_directions():
    h = np.array([[1.0, 0.0], [0.0, 1.0]])
    d = candidate_directions(h, angles=4)
    assert d.shape[0] == 2
    np.testing.assert_allclose(np.linalg.norm(d, axis=0), 1.0)
    # MRT duplicates ZF for orthogonal users; no vector appears twice
    gram = np.abs(d.conj().T @ d)
    np.fill_diagonal(gram, 0)
    assert np.all(gram < 1 - 1e-9)
    assert candidate_directions(h + 0.1j).shape[1] == 6  # 2 MRT, 2 ZF, sum, difference


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSearchSpec(power_levels=(0.0,))
    with pytest.raises(ValueError):
        GridSearchSpec(angles=-1)
    with pytest.raises(ValueError):
        GridSearchSpec(qos_slack=1.0)


def test_grid_rejects_large_instances():
    sc = random_scenario(np.random.default_rng(0), 3, 2)
    with pytest.raises(ValueError):
        grid_search_ee(sc, build_grouping(sc.channel, 2), [8e6, 8e6], 1.0)


@pytest.mark.parametrize("seed", range(3))
def test_grid_single_user_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal((2, 1)) + 1j * rng.standard_normal((2, 1))) * 2e-6
    cfg = SystemConfig(n_tx=2, n_users=1)
    sc = Scenario.from_channel(h, cfg.noise_w, cfg)
    res = grid_search_ee(sc, GroupingResult.singletons(1), [cfg.r_hd_bps], cfg.p_tr_w)
    p_star = single_user_power(float(np.sum(np.abs(h) ** 2)), cfg.noise_w, cfg.r_hd_bps, cfg.bandwidth_hz)
    assert res.feasible
    assert res.power_w == pytest.approx(p_star, rel=1e-2)


def test_infeasible_reported_by_both():
    rng = np.random.default_rng(3)
    sc = random_scenario(rng, 2, 2, scale=3e-8)
    g = build_grouping(sc.channel, 2)
    cfg = sc.config
    # each user's streams need at least its single-link power, so this sum is a lower bound
    gains = np.sum(np.abs(sc.channel) ** 2, axis=0)
    bound = sum(single_user_power(x, cfg.noise_w, cfg.r_hd_bps, cfg.bandwidth_hz) for x in gains)
    assert bound > cfg.p_tr_w
    grid = grid_search_ee(sc, g, [cfg.r_hd_bps] * 2, cfg.p_tr_w)
    sol = solve_ee_max(sc, g, QosPartition.all_hd(2), cfg.p_tr_w)
    assert not grid.feasible and not sol.feasible


def test_optimizer_reaches_grid_on_tiny_instance():
    rng = np.random.default_rng(5)
    sc = random_scenario(rng, 2, 2, scale=3e-6)
    g = build_grouping(sc.channel, 2)
    cfg = sc.config
    grid = grid_search_ee(sc, g, [cfg.r_hd_bps] * 2, cfg.p_tr_w)
    sol = solve_ee_max(sc, g, QosPartition.all_hd(2), cfg.p_tr_w)
    assert grid.feasible and sol.feasible
    assert sol.ee >= 0.99 * grid.ee
