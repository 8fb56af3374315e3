import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_scenario
from rscmd.grouping import GroupingResult, build_grouping
from rscmd.oracle import straight_line_rates
from rscmd.rates import (
    BeamformerSet,
    RateAllocation,
    achievable_rates,
    common_sinr,
    energy_efficiency,
    private_sinr,
    sinr_terms,
    total_transmit_power,
)
from rscmd.scenario import Scenario, SystemConfig


def _beams(rng, n, k, scale=0.3, private_active=None):
    wp = scale * (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k)))
    wc = scale * (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k)))
    return BeamformerSet.create(wp, wc, private_active)


def test_total_power_examples():
    assert total_transmit_power(BeamformerSet.zeros(2, 2)) == 0.0
    one = BeamformerSet.create([[1.0, 0.0], [0.0, 0.0]], np.zeros((2, 2)))
    assert total_transmit_power(one) == 1.0
    b = BeamformerSet.create(np.array([[1.0], [1.0]]) / np.sqrt(2), np.array([[0.0], [2.0j]]))
    assert total_transmit_power(b) == pytest.approx(5.0, abs=1e-15)


def test_beamformer_set_invariants():
    with pytest.raises(ValueError):
        BeamformerSet(np.ones((2, 2), complex), np.zeros((2, 2), complex), np.array([True, False]), np.ones(2, bool))
    with pytest.raises(ValueError):
        BeamformerSet.create([[np.nan]], [[0.0]])
    b = BeamformerSet.create(np.ones((2, 2)), np.ones((2, 2)), [True, False])
    assert np.all(b.private[:, 1] == 0)
    assert b.without_private([0]).private_powers().tolist() == [0.0, 0.0]


def test_rate_allocation_rejects_negative():
    with pytest.raises(ValueError):
        RateAllocation(np.array([-1.0]), np.array([0.0]))


def test_interference_free_common_sinr():
    h = np.array([[1.0, 0.5], [0.2, 1.0]])
    sc = Scenario.from_channel(h, 0.1)
    g = GroupingResult.from_decodes([(1, 0), (1,)], 2)
    wc = np.zeros((2, 2), complex)
    wc[:, 1] = [0.3, 0.4j]
    b = BeamformerSet.create(np.zeros((2, 2)), wc)
    expected = abs(np.vdot(h[:, 0], wc[:, 1])) ** 2 / 0.1
    assert common_sinr(sc, b, g, 0, 1) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        common_sinr(sc, b, g, 1, 0)


def test_worked_k2_instance_against_hand_evaluation():
    h = np.array([[1.0 + 0.5j, 0.3], [0.2, 0.8 - 0.1j]])
    noise = 0.05
    sc = Scenario.from_channel(h, noise)
    g = GroupingResult.from_decodes([(1, 0), (1,)], 2)
    wp = np.array([[0.4, 0.1j], [0.1, 0.5]])
    wc = np.array([[0.2j, 0.3], [0.3, 0.2]])
    b = BeamformerSet.create(wp, wc)

    def gain(k, w):
        return abs(np.conj(h[:, k]) @ w) ** 2

    # user 0 decodes s_1^c first (its own common still interferes), then s_0^c, then its private
    t0 = gain(0, wp[:, 0]) + gain(0, wp[:, 1]) + noise
    assert common_sinr(sc, b, g, 0, 1) == pytest.approx(gain(0, wc[:, 1]) / (t0 + gain(0, wc[:, 0])), rel=1e-12)
    assert common_sinr(sc, b, g, 0, 0) == pytest.approx(gain(0, wc[:, 0]) / t0, rel=1e-12)
    assert private_sinr(sc, b, g, 0) == pytest.approx(gain(0, wp[:, 0]) / (gain(0, wp[:, 1]) + noise), rel=1e-12)
    # user 1 only decodes its own common message; s_0^c is interference everywhere
    t1 = gain(1, wp[:, 0]) + gain(1, wp[:, 1]) + noise + gain(1, wc[:, 0])
    assert common_sinr(sc, b, g, 1, 1) == pytest.approx(gain(1, wc[:, 1]) / t1, rel=1e-12)
    p1 = gain(1, wp[:, 1]) / (gain(1, wp[:, 0]) + gain(1, wc[:, 0]) + noise)
    assert private_sinr(sc, b, g, 1) == pytest.approx(p1, rel=1e-12)


def test_high_power_limit():
    rng = np.random.default_rng(4)
    sc = random_scenario(rng, 3, 3, scale=1.0)
    g = build_grouping(sc.channel, 2)
    b = _beams(rng, 3, 3)
    k, i = 0, g.decodes[0][0]
    terms = sinr_terms(sc, b, g)
    n = terms.common_pairs.index((k, i))
    limit = terms.common_signal[n] / (terms.common_denom[n] - sc.noise_w[k])
    assert common_sinr(sc, b.scaled(1e6), g, k, i) == pytest.approx(limit, rel=1e-3)


def test_mrt_single_user():
    h = np.array([[3e-6 + 1e-6j], [2e-6j]])
    sc = Scenario.from_channel(h, 1e-13)
    g = GroupingResult.singletons(1)
    p = 0.7
    w = h / np.linalg.norm(h) * math.sqrt(p)
    b = BeamformerSet.create(w, np.zeros((2, 1)))
    assert private_sinr(sc, b, g, 0) == pytest.approx(p * np.linalg.norm(h) ** 2 / 1e-13, rel=1e-12)


def test_inactive_private_beam_has_zero_rate():
    rng = np.random.default_rng(5)
    sc = random_scenario(rng, 2, 3, scale=1.0)
    g = build_grouping(sc.channel, 2)
    b = _beams(rng, 2, 3, private_active=[True, False, True])
    assert private_sinr(sc, b, g, 1) == 0.0
    assert achievable_rates(sc, b, g).private_rate[1] == 0.0


def test_rate_examples():
    sc = Scenario.from_channel([[1.0]], 1.0, SystemConfig(n_tx=1, n_users=1, bandwidth_hz=10e6))
    g = GroupingResult.singletons(1)
    b = BeamformerSet.create([[1.0]], [[0.0]])
    assert achievable_rates(sc, b, g).private_rate[0] == pytest.approx(10e6, rel=1e-15)
    zero = achievable_rates(sc, BeamformerSet.zeros(1, 1), g)
    assert zero.sum_rate == 0.0


def test_common_rate_min_rule():
    # decoders of s_0^c see SINR 3 and 1 -> min(20, 10) Mbit/s
    h = np.array([[1.0, 1.0]])
    sc = Scenario.from_channel(h, np.array([1.0 / 3.0, 1.0]))
    g = GroupingResult.from_decodes([(0,), (0, 1)], 2)
    b = BeamformerSet.create(np.zeros((1, 2)), [[1.0, 0.0]], common_active=[True, False])
    r = achievable_rates(sc, b, g)
    assert r.common_rate[0] == pytest.approx(10e6, rel=1e-12)


def test_energy_efficiency_examples():
    zero = RateAllocation(np.zeros(2), np.zeros(2))
    assert energy_efficiency(zero, 1.0, 5.0) == 0.0
    rates = RateAllocation(np.full(12, 8e6), np.zeros(12))
    p_tr, p_c = 3.16228, 5.01187
    assert energy_efficiency(rates, p_tr, p_c) / 1e6 == pytest.approx(11.745, abs=1e-3)
    double = RateAllocation(2 * rates.private_rate, 2 * rates.common_rate)
    assert energy_efficiency(double, p_tr, p_c) == 2 * energy_efficiency(rates, p_tr, p_c)
    with pytest.raises(ValueError):
        energy_efficiency(rates, -1.0, 1.0)
    with pytest.raises(ValueError):
        energy_efficiency(rates, 1.0, 0.0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 6), st.integers(1, 3))
@settings(max_examples=60, deadline=None)
def test_matches_straight_line_oracle(seed, n, k, d):
    rng = np.random.default_rng(seed)
    sc = random_scenario(rng, n, k, scale=1.0)
    g = build_grouping(sc.channel, d)
    b = _beams(rng, n, k, private_active=rng.random(k) < 0.7)
    r = achievable_rates(sc, b, g)
    p, c = straight_line_rates(sc, b, g)
    np.testing.assert_allclose(r.private_rate, p, rtol=1e-10, atol=0)
    np.testing.assert_allclose(r.common_rate, c, rtol=1e-10, atol=0)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_denominators_and_sic_bookkeeping(seed):
    rng = np.random.default_rng(seed)
    sc = random_scenario(rng, 3, 5, scale=1.0)
    g = build_grouping(sc.channel, 3)
    b = _beams(rng, 3, 5)
    terms = sinr_terms(sc, b, g)
    assert np.all(terms.private_denom >= sc.noise_w) and np.all(terms.common_denom >= sc.noise_w[0])
    # at each SIC step: signal + undecoded remainder + already cancelled = all received common power
    gc = np.abs(sc.channel.conj().T @ b.common) ** 2
    gp = np.abs(sc.channel.conj().T @ b.private) ** 2
    for n, (k, i) in enumerate(terms.common_pairs):
        z = g.decodes[k]
        cancelled = gc[k, list(z[: z.index(i)])].sum()
        counted = terms.common_denom[n] - gp[k].sum() - sc.noise_w[k]
        total = counted + terms.common_signal[n] + cancelled
        assert total == pytest.approx(gc[k].sum(), rel=1e-10)


@given(st.integers(0, 2**32 - 1), st.floats(1.01, 5.0))
@settings(max_examples=40, deadline=None)
def test_private_power_monotonicity(seed, factor):
    rng = np.random.default_rng(seed)
    sc = random_scenario(rng, 3, 4, scale=1.0)
    g = build_grouping(sc.channel, 2)
    b = _beams(rng, 3, 4)
    wp = np.array(b.private)
    wp[:, 0] *= factor
    b2 = BeamformerSet.create(wp, b.common)
    assert private_sinr(sc, b2, g, 0) > private_sinr(sc, b, g, 0)
    for k in range(1, 4):
        assert private_sinr(sc, b2, g, k) <= private_sinr(sc, b, g, k)
