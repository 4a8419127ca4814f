import pickle

import numpy as np
import pytest

from conftest import tiny_problem
from opa.config import get_param
from opa.errors import ConfigError, UnrepairedAllocationError
from opa.netmodel import (NFE, AllocationProblem, EvaluationCounter, NetworkConfig, cell_distance, draw_channel, path_loss_db,
                          rate_matrix, rb_rate, repair_allocation, snr, snr_matrix)
from opa.satisfaction import ZoneOfToleranceOracle
from utils.unit_conversion import db_to_linear, dbm_to_watts


def test_network_from_params(params):

    cfg = NetworkConfig.from_params(params)

    assert cfg.num_rbs == 100
    assert cfg.num_users == 4
    assert cfg.per_rb_power == pytest.approx(0.01)
    assert cfg.noise_density == pytest.approx(dbm_to_watts(-174.0))
    assert cfg.noise_power == pytest.approx(dbm_to_watts(-174.0) * 180e3)


def test_network_rejects_unknown_key(params):

    params['network']['antennas'] = 2

    with pytest.raises(ConfigError, match='antennas'):
        NetworkConfig.from_params(params)


def test_network_missing_key(params):

    del params['network']['num_rbs']

    with pytest.raises(ConfigError, match='Missing network parameters'):
        NetworkConfig.from_params(params)


def test_network_invariants():

    with pytest.raises(ConfigError):
        NetworkConfig(min_satisfaction=6)

    with pytest.raises(ConfigError):
        NetworkConfig(num_rbs=10, max_power=1.0, per_rb_power=0.2)


def test_path_loss():

    assert path_loss_db(10.0) == pytest.approx(73.46)
    assert path_loss_db(100.0) == pytest.approx(108.46)


def test_cell_distance_is_clipped(network):

    d = cell_distance(network, [(0, 0), (49, 49), (99, 50)])

    assert d[0] == network.cell_radius
    assert d[1] == pytest.approx(10.0)
    assert 10.0 <= d[2] <= network.cell_radius


def test_draw_channel_is_deterministic(network):

    a = draw_channel(network, 5)
    b = draw_channel(network, 5)
    c = draw_channel(network, 6)

    assert np.array_equal(a.gains, b.gains)
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.gains, c.gains)
    assert a.gains.shape == (2, 8)
    assert np.all(a.gains > 0.0)


def test_rayleigh_fading_has_unit_mean_power():

    cfg = NetworkConfig(num_rbs=5000, num_users=4)
    ch = draw_channel(cfg, 21)
    large_scale = db_to_linear(-path_loss_db(cell_distance(cfg, ch.positions)))
    fading = ch.gains / large_scale[:, np.newaxis]

    assert fading.mean() == pytest.approx(1.0, abs=0.03)
    assert np.median(fading) == pytest.approx(np.log(2.0), abs=0.03)


def test_draw_channel_rejects_outside_grid(network):

    with pytest.raises(ValueError):
        draw_channel(network, 1, positions=[(0, 0), (100, 3)])


def test_rb_rate():

    cfg = NetworkConfig()

    assert rb_rate(cfg, 0.0) == 0.0
    assert rb_rate(cfg, 1.0) == pytest.approx(180e3)
    assert rb_rate(cfg, 3.0) == pytest.approx(360e3)

    with pytest.raises(ValueError):
        rb_rate(cfg, -1.0)


def test_snr_matches_matrix(network):

    ch = draw_channel(network, 3)

    assert snr(network, ch, 1, 4) == pytest.approx(snr_matrix(network, ch)[1, 4])
    assert rate_matrix(network, ch).shape == (2, 8)


def test_repair_resolves_shared_blocks():

    rates = np.ones((3, 4))
    bits = np.ones((3, 4), dtype=np.uint8)
    repaired = repair_allocation(bits, rates, np.full(3, 10.0), 0)

    assert np.all(repaired.sum(axis=0) == 1)


def test_repair_enforces_demand_dropping_slowest_blocks():

    rates = np.array([[5.0, 1.0, 3.0, 2.0]])
    bits = np.ones((1, 4), dtype=np.uint8)
    repaired = repair_allocation(bits, rates, np.array([8.0]), 0)

    # Dropping the 1 and the 2 leaves 5 + 3 = 8
    assert repaired.tolist() == [[1, 0, 1, 0]]


def test_repair_keeps_valid_allocations():

    rates = np.array([[5.0, 1.0], [2.0, 2.0]])
    bits = np.array([[1, 0], [0, 1]], dtype=np.uint8)

    assert np.array_equal(repair_allocation(bits, rates, np.array([10.0, 10.0]), 3), bits)


def test_assess_hand_example():

    problem = tiny_problem(min_levels=4)
    bits = np.array([[1, 0, 0, 0], [0, 0, 0, 1]], dtype=np.uint8)
    assessment = problem.assess(bits, count=False)

    # Shortfalls 400 and 350 kbps against a 600 kbps tolerance are both level 2
    assert assessment.levels.tolist() == [2, 2]
    assert assessment.objectives.f1 == pytest.approx(375000.0)
    assert assessment.objectives.f2 == pytest.approx(2.0)
    assert assessment.objectives.violation == pytest.approx(4.0)
    assert not assessment.objectives.feasible


def test_full_allocation_is_level_five(tiny):

    bits = np.array([[1, 1, 0, 0], [0, 0, 1, 1]], dtype=np.uint8)
    objectives = tiny.evaluate(bits)

    # u0 gets 900 of 900, u1 700 of 800 kbps
    assert objectives.f1 == pytest.approx(50000.0)
    assert objectives.f2 == pytest.approx(4.5)


def test_evaluate_rejects_unrepaired(tiny):

    with pytest.raises(UnrepairedAllocationError):
        tiny.evaluate(np.ones((2, 4), dtype=np.uint8))


def test_evaluations_are_counted(tiny):

    before = NFE.count
    tiny.evaluate(np.zeros((2, 4), dtype=np.uint8))
    tiny.assess(np.zeros((2, 4), dtype=np.uint8), count=False)

    assert tiny.nfe == 1
    assert NFE.count == before + 1


def test_counter_pickles_without_lock():

    counter = EvaluationCounter()
    counter.increment(3)
    restored = pickle.loads(pickle.dumps(counter))
    restored.increment()

    assert restored.count == 4


def test_problem_validation():

    oracle = ZoneOfToleranceOracle()

    with pytest.raises(ValueError):
        AllocationProblem(np.ones((2, 3)), np.ones(3), [], oracle)

    with pytest.raises(ValueError):
        tiny_problem(demand_kbps=(-1, 5))


def test_with_oracle_keeps_instance(tiny):

    other = tiny.with_oracle(lambda ctx, delta: 5)

    assert np.array_equal(other.per_rb_rate, tiny.per_rb_rate)
    assert other.nfe == 0
    assert other.evaluate(np.zeros((2, 4), dtype=np.uint8)).f2 == 5.0


def test_min_satisfaction_param(params):

    assert get_param(params, '/network/min_satisfaction') == 4
