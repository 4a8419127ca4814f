import itertools

import numpy as np
import pytest

from opa.config import apply_overrides, load_params
from opa.emoo.core import Individual, non_dominated
from opa.netmodel import AllocationProblem, NetworkConfig
from opa.satisfaction import UserContext, ZoneOfToleranceOracle, generate_dataset, working_professional_persona

# Per-RB rates of the two-user, four-RB instance, kbps
TINY_RATES_KBPS = np.array([[500.0, 400.0, 300.0, 200.0],
                            [100.0, 350.0, 250.0, 450.0]])
TINY_DEMAND_KBPS = (900, 800)


def make_context(user_id=0, demand_rate=900, max_delta=600, min_rate=0, location=(10, 10), **changes):

    values = dict(user_id=user_id, date='2018-01-10', time='08:00:00', day='Wednesday', classified_day='weekday',
                  time_period='morning', location=location, location_name='home', speed=0.0, speed_range='low',
                  activity='sitting', request_arrived=1, application='video', service='sd streaming',
                  demand_rate=demand_rate, min_rate=min_rate, max_delta=max_delta)
    values.update(changes)

    return UserContext(**values)


def tiny_problem(sat_fn=None, min_levels=1, demand_kbps=TINY_DEMAND_KBPS):

    contexts = [make_context(user_id=u, demand_rate=d, max_delta=600) for u, d in enumerate(demand_kbps)]

    return AllocationProblem(TINY_RATES_KBPS * 1000.0, np.array(demand_kbps, dtype=float) * 1000.0, contexts,
                             sat_fn or ZoneOfToleranceOracle(), min_levels)


def brute_force_front(problem):

    ''' Exact front by enumerating every owner assignment of every RB. '''

    members = []

    for owners in itertools.product(range(problem.num_users + 1), repeat=problem.num_rbs):
        bits = np.zeros(problem.shape, dtype=np.uint8)

        for n, owner in enumerate(owners):
            if owner:
                bits[owner - 1, n] = 1

        if np.any((bits * problem.per_rb_rate).sum(axis=1) > problem.demand):
            continue

        members.append(Individual(genotype=bits, objectives=problem.assess(bits, count=False).objectives))

    return sorted(set(m.point for m in non_dominated(members)))


@pytest.fixture
def tiny():

    return tiny_problem()


@pytest.fixture
def network():

    return NetworkConfig(num_rbs=8, num_users=2)


@pytest.fixture
def params():

    return load_params()


@pytest.fixture
def small_params(params):

    ''' Parameters scaled down so every experiment finishes in seconds. '''

    return apply_overrides(params, {
        'network': {'num_rbs': 8, 'num_users': 2},
        'emoo': {'population_size': 10},
        'experiment': {'algorithms': ['nsga2', 'emoea'], 'sat_source': 'oracle', 'runs_per_instance': 2,
                       'instances': 2, 'reference_runs': 2, 'nfe': 40, 'simulation_minutes': 0.25,
                       'window_seconds': 5, 'user_grid': [2], 'nfe_grid': [40], 'scale_users': 2, 'scale_nfe': 40,
                       'training_fractions': [1.0], 'include_oracle': False}})


@pytest.fixture(scope='session')
def samples():

    return generate_dataset(working_professional_persona(), 1500, ts_seconds=20.0)
