'''
Experiment orchestration: instances, the non-personalised baseline, the
algorithm comparison, surrogate-quality impact, scalability and single
optimisation runs.
'''
from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
import pandas as pd

from opa import emoo
from opa.config import apply_overrides, get_param
from opa.emoo import build_reference_set, rank_merged_solutions, run_algorithm, select_operating_point
from opa.errors import ConfigError, HarnessError
from opa.metrics import Normalisation, assess_front, feasible_points, hypervolume
from opa.netmodel import AllocationProblem, NetworkConfig, demand_vector, draw_channel, rate_matrix, repair_allocation
from opa.satisfaction import ContextStream, ZoneOfToleranceOracle, persona_from_params
from opa.stats import build_stat_report, sem_curve
from opa.surrogate import SurrogateSpec, sample_accuracy, train
from utils.config_hash import config_hash, derive_seed

logger = logging.getLogger(__name__)

EXPERIMENTS = ('compare', 'simulate', 'surrogate_impact', 'scalability', 'optimize')
MODES = ('npn', 'fpn', 'spn')
SAT_SOURCES = ('surrogate', 'oracle')

# Seed-derivation namespaces
INSTANCE_KEY = 1
RUN_KEY = 2
SIMULATION_KEY = 3
SPLIT_KEY = 4

BURN_IN_SLOTS = 600
MAX_START_OFFSET_HOURS = 72


@dataclass(frozen=True)
class ExperimentConfig:

    '''
    Resolved experiment settings.

    params is the full resolved parameter mapping; its hash identifies every result.
    '''

    network: NetworkConfig
    params: dict
    experiment: str = 'compare'
    seed: int = 2021
    algorithms: tuple = ('nsga2', 'nsga3', 'spea2', 'emoea')
    sat_source: str = 'surrogate'
    runs_per_instance: int = 30
    instances: int = 30
    reference_runs: int = 30
    alpha: float = 0.05
    nfe: int = 1000
    population_size: int = 100
    simulation_minutes: float = 5.0
    ts_seconds: float = 1.0
    window_seconds: float = 30.0
    modes: tuple = MODES
    sim_algorithm: str = 'emoea'
    manage_surrogate: bool = False
    training_fractions: tuple = (0.01, 0.1, 0.5, 1.0)
    include_oracle: bool = True
    user_grid: tuple = (2, 4, 6, 8)
    nfe_grid: tuple = (500, 1000, 2000, 3000, 4000, 5000)
    scale_users: int = 6
    scale_nfe: int = 5000
    workers: int = 1

    def __post_init__(self):

        if self.experiment not in EXPERIMENTS:
            raise ConfigError("Unknown experiment '{}'.".format(self.experiment))

        if self.runs_per_instance < 1 or self.instances < 1 or self.reference_runs < 1:
            raise ConfigError("runs_per_instance, instances and reference_runs must be at least 1.")

        if self.sat_source not in SAT_SOURCES:
            raise ConfigError("sat_source must be one of {}.".format(', '.join(SAT_SOURCES)))

        unknown = [a for a in self.algorithms + (self.sim_algorithm,) if a not in emoo.ALGORITHMS]

        if unknown:
            raise ConfigError("Unknown algorithm(s): {}.".format(', '.join(unknown)))

        if not self.modes or any(m not in MODES for m in self.modes):
            raise ConfigError("modes must be a non-empty subset of {}.".format(', '.join(MODES)))

        if self.nfe < self.population_size:
            raise ConfigError("nfe must be at least the population size.")

        if self.ts_seconds <= 0.0 or self.window_seconds < self.ts_seconds:
            raise ConfigError("window_seconds must be at least one time slot.")

    @classmethod
    def from_params(cls, params, experiment='compare', paper_scale=False, seed=None):

        ''' Builds the config from the "experiment" section, applying paper-scale values and a seed override. '''

        if paper_scale:
            params = apply_overrides(params, {'experiment': get_param(params, '/experiment/paper_scale')})

        if seed is not None:
            params = apply_overrides(params, {'experiment': {'seed': int(seed)}})

        def value(key):
            return get_param(params, '/experiment/' + key)

        try:
            return cls(network=NetworkConfig.from_params(params),
                       params=params,
                       experiment=experiment,
                       seed=int(value('seed')),
                       algorithms=tuple(value('algorithms')),
                       sat_source=str(value('sat_source')),
                       runs_per_instance=int(value('runs_per_instance')),
                       instances=int(value('instances')),
                       reference_runs=int(value('reference_runs')),
                       alpha=float(value('alpha')),
                       nfe=int(value('nfe')),
                       population_size=int(get_param(params, '/emoo/population_size')),
                       simulation_minutes=float(value('simulation_minutes')),
                       ts_seconds=float(value('ts_seconds')),
                       window_seconds=float(value('window_seconds')),
                       modes=tuple(value('modes')),
                       sim_algorithm=str(value('sim_algorithm')),
                       manage_surrogate=bool(value('manage_surrogate')),
                       training_fractions=tuple(float(f) for f in value('training_fractions')),
                       include_oracle=bool(value('include_oracle')),
                       user_grid=tuple(int(u) for u in value('user_grid')),
                       nfe_grid=tuple(int(n) for n in value('nfe_grid')),
                       scale_users=int(value('scale_users')),
                       scale_nfe=int(value('scale_nfe')),
                       workers=int(value('workers')))

        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError("Invalid experiment parameter: {}".format(e)) from e

    @property
    def config_hash(self):

        return config_hash({'experiment': self.experiment, 'params': self.params})

    def replace(self, **changes):

        return dataclasses.replace(self, **changes)

    def options(self, algorithm):

        return emoo.algorithm_options(self.params, algorithm)


@dataclass(eq=False)
class Instance:

    index: int
    seed: int
    contexts: list
    channel: object


def make_instance(cfg, index, num_users=None):

    '''
    One optimisation instance: user contexts from the persona stream and a channel
    drawn at the users' grid cells. The persona clock starts at a seeded offset
    and runs a burn-in so instances cover different places and times of day.
    '''

    network = cfg.network if num_users is None else cfg.network.with_users(num_users)
    seed = derive_seed(cfg.seed, INSTANCE_KEY, index, network.num_users)
    rng = np.random.default_rng(seed)

    persona = persona_from_params(cfg.params)
    start = datetime.strptime(get_param(cfg.params, '/persona/start'), '%Y-%m-%d %H:%M:%S')
    start += timedelta(hours=float(rng.uniform(0.0, MAX_START_OFFSET_HOURS)))
    stream = ContextStream(persona, network.num_users, start, float(get_param(cfg.params, '/persona/dataset_ts_seconds')),
                           network.grid_size, seed=seed)

    for _ in range(BURN_IN_SLOTS):
        stream.step()

    contexts = stream.step()
    channel = draw_channel(network, seed, positions=[c.location for c in contexts])

    return Instance(index=index, seed=seed, contexts=contexts, channel=channel)


def satisfaction_source(cfg, surrogate=None):

    if cfg.sat_source == 'oracle':
        return ZoneOfToleranceOracle()

    if surrogate is None:
        raise HarnessError("sat_source is 'surrogate' but no trained surrogate was supplied. Run 'train' first.")

    return surrogate


def greedy_max_rate(rates, demand):

    '''
    Non-personalised allocation on a rate matrix.

    RBs are visited in descending order of their best per-user rate and each
    goes to the fastest user whose demand is not yet met; the result is then
    demand-repaired.
    '''

    rates = np.asarray(rates, dtype=float)
    demand = np.asarray(demand, dtype=float)
    bits = np.zeros(rates.shape, dtype=np.uint8)
    given = np.zeros(len(demand))

    for n in np.argsort(-rates.max(axis=0), kind='stable'):
        eligible = np.flatnonzero(given < demand)

        if eligible.size == 0:
            break

        u = eligible[np.argmax(rates[eligible, n])]
        bits[u, n] = 1
        given[u] += rates[u, n]

    return repair_allocation(bits, rates, demand, 0)


def npn_allocate(cfg, ch, contexts):

    return greedy_max_rate(rate_matrix(cfg, ch), demand_vector(contexts))


def _run_task(task):

    name, problem, M, nfe, seed, options = task

    return run_algorithm(name, problem, M, nfe, seed, **options)


def run_tasks(tasks, workers=1):

    ''' Runs (algorithm, problem, M, nfe, seed, options) tasks, results in task order. '''

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(_run_task, tasks))

    return [_run_task(task) for task in tasks]


def _run_seed(cfg, instance_index, run):

    # Shared across algorithms so comparisons are paired
    return derive_seed(cfg.seed, RUN_KEY, instance_index, run)


def run_fronts(cfg, problem, instance_index, runs, nfe=None, algorithms=None, first_run=0):

    ''' Fronts per algorithm: {algorithm: [front per run]}, runs numbered from first_run. '''

    algorithms = algorithms or cfg.algorithms
    nfe = nfe or cfg.nfe
    tasks = [(a, problem, cfg.population_size, nfe, _run_seed(cfg, instance_index, first_run + r), cfg.options(a))
             for a in algorithms for r in range(runs)]
    results = run_tasks(tasks, cfg.workers)

    return dict((a, results[i * runs:(i + 1) * runs]) for i, a in enumerate(algorithms))


def run_compare(cfg, surrogate=None):

    '''
    Compares the algorithms over cfg.instances instances.

    Per instance every algorithm first runs reference_runs times to build the
    reference set, then runs_per_instance further times with fresh seeds; those
    fronts are scored against the reference set and their metric values
    averaged. The series carry the HV standard-error curves over runs (first
    instance) and over instances.
    '''

    sat_fn = satisfaction_source(cfg, surrogate)
    rows = []
    series = {}
    instance_hv = dict((a, []) for a in cfg.algorithms)

    for m in range(cfg.instances):
        instance = make_instance(cfg, m)
        problem = AllocationProblem.from_channel(cfg.network, instance.channel, instance.contexts, sat_fn)
        reference_fronts = run_fronts(cfg, problem, m, cfg.reference_runs)
        fronts = run_fronts(cfg, problem, m, cfg.runs_per_instance, first_run=cfg.reference_runs)
        reference = build_reference_set([f for a in cfg.algorithms for f in reference_fronts[a]])
        normalisation = Normalisation.from_reference(reference)

        for a in cfg.algorithms:
            reports = [assess_front(f, reference, normalisation) for f in fronts[a]]

            for metric in ('hv', 'gd', 'igd', 'sp', 'ngr'):
                rows.append((m, a, metric, float(np.mean([getattr(r, metric) for r in reports]))))

            instance_hv[a].append(float(np.mean([r.hv for r in reports])))

            if m == 0:
                series['sem_runs_' + a] = sem_curve([r.hv for r in reports])

        if m == 0:
            ranked = rank_merged_solutions(dict((a, reference_fronts[a]) for a in cfg.algorithms))

            for a in cfg.algorithms:
                series['ranked_' + a] = ranked[ranked['algorithm'] == a][['f1', 'f2']].reset_index(drop=True)

            series['merged_rank'] = ranked[['f1', 'rank']].reset_index(drop=True)
            series['reference_front'] = pd.DataFrame(reference.objectives(), columns=['f1', 'f2'])

            point, _ = select_operating_point(reference, cfg.network.min_satisfaction)
            series['operating_point'] = pd.DataFrame([point.point], columns=['f1', 'f2'])

        logger.info("Instance %d/%d complete, reference set %d solutions", m + 1, cfg.instances, len(reference))

    for a in cfg.algorithms:
        series['sem_instances_' + a] = sem_curve(instance_hv[a])

    values = pd.DataFrame(rows, columns=['instance', 'algorithm', 'metric', 'value'])
    report = build_stat_report(values, cfg.alpha)
    report.series = series

    return report


def oracle_hv(front, oracle_problem, normalisation):

    ''' Hypervolume of a front after re-evaluating its members with the ground-truth oracle. '''

    points = []

    for member in front:
        objectives = oracle_problem.assess(member.genotype, count=False).objectives

        if objectives.feasible:
            points.append((objectives.f1, objectives.f2))

    return hypervolume(normalisation.apply(np.array(points, dtype=float).reshape(-1, 2)))


def split_dataset(samples, seed, held_out=0.2):

    order = np.random.default_rng(derive_seed(seed, SPLIT_KEY)).permutation(len(samples))
    cut = int(round(len(samples) * (1.0 - held_out)))

    return [samples[i] for i in order[:cut]], [samples[i] for i in order[cut:]]


def run_surrogate_impact(cfg, samples, spec=None, trainer=None):

    '''
    Mean oracle-measured HV per algorithm for surrogates trained on growing shares of the data.

    Fronts found with each surrogate are re-evaluated by the oracle and scored
    against the oracle reference set of the same instance. With include_oracle a
    final row uses the oracle itself as the surrogate.

    Returns a DataFrame with columns model, training_fraction, accuracy, hv_<algorithm>...
    '''

    spec = spec or SurrogateSpec.from_params(cfg.params)
    trainer = trainer or train
    training, held_out = split_dataset(samples, cfg.seed)

    instance = make_instance(cfg, 0)
    oracle = ZoneOfToleranceOracle()
    oracle_problem = AllocationProblem.from_channel(cfg.network, instance.channel, instance.contexts, oracle)
    oracle_fronts = run_fronts(cfg, oracle_problem, 0, cfg.reference_runs)
    reference = build_reference_set([f for a in cfg.algorithms for f in oracle_fronts[a]])
    normalisation = Normalisation.from_reference(reference)

    models = [('surrogate', f, None) for f in cfg.training_fractions]

    if cfg.include_oracle:
        models.append(('oracle', 1.0, oracle))

    rows = []

    for label, fraction, model in models:
        if model is None:
            subset = training[:max(1, int(round(fraction * len(training))))]
            model = trainer(spec, subset)

        problem = oracle_problem.with_oracle(model)
        fronts = run_fronts(cfg, problem, 0, cfg.runs_per_instance, first_run=cfg.reference_runs)
        row = {'model': label, 'training_fraction': fraction, 'accuracy': sample_accuracy(model, held_out)}

        for a in cfg.algorithms:
            row['hv_' + a] = float(np.mean([oracle_hv(f, oracle_problem, normalisation) for f in fronts[a]]))

        rows.append(row)
        logger.info("Surrogate impact: %s at fraction %.2f, accuracy %.4f", label, fraction, row['accuracy'])

    return pd.DataFrame(rows)


def front_hv(front, normalisation):

    return hypervolume(normalisation.apply(feasible_points(front)))


def _hv_table(fronts_by_key, key_name, normalisation_by_key):

    rows = []

    for (algorithm, key), fronts in fronts_by_key.items():
        hv = [front_hv(f, normalisation_by_key[key]) for f in fronts]
        rows.append({'algorithm': algorithm, key_name: key, 'mean_hv': float(np.mean(hv)), 'median_hv': float(np.median(hv))})

    return pd.DataFrame(rows)


def run_scalability(cfg, surrogate=None):

    '''
    Mean and median HV against the number of users (at scale_nfe) and against
    the NFE budget (at scale_users). Reference sets are pooled from the scored fronts,
    per user count and across the whole NFE grid.

    Returns:
        (users_table, nfe_table)
    '''

    sat_fn = satisfaction_source(cfg, surrogate)
    users_fronts, users_norm = {}, {}

    for users in cfg.user_grid:
        instance = make_instance(cfg, 0, num_users=users)
        network = cfg.network.with_users(users)
        problem = AllocationProblem.from_channel(network, instance.channel, instance.contexts, sat_fn)
        fronts = run_fronts(cfg, problem, 0, cfg.runs_per_instance, nfe=cfg.scale_nfe)
        users_norm[users] = Normalisation.from_reference(build_reference_set([f for a in cfg.algorithms for f in fronts[a]]))

        for a in cfg.algorithms:
            users_fronts[(a, users)] = fronts[a]

        logger.info("Scalability: %d users complete", users)

    instance = make_instance(cfg, 0, num_users=cfg.scale_users)
    network = cfg.network.with_users(cfg.scale_users)
    problem = AllocationProblem.from_channel(network, instance.channel, instance.contexts, sat_fn)
    nfe_fronts = {}

    for nfe in cfg.nfe_grid:
        fronts = run_fronts(cfg, problem, 0, cfg.runs_per_instance, nfe=nfe)

        for a in cfg.algorithms:
            nfe_fronts[(a, nfe)] = fronts[a]

        logger.info("Scalability: NFE %d complete", nfe)

    norm = Normalisation.from_reference(build_reference_set([f for fronts in nfe_fronts.values() for f in fronts]))

    return (_hv_table(users_fronts, 'users', users_norm),
            _hv_table(nfe_fronts, 'nfe', dict((n, norm) for n in cfg.nfe_grid)))


@dataclass
class OptimizeResult:

    instance: Instance
    front: object
    operating_point: object
    target_met: bool
    problem: AllocationProblem = field(repr=False, default=None)


def run_optimize(cfg, surrogate=None, algorithm=None, instance_index=0):

    ''' One algorithm, one run, one instance; selects the operating point at the minimum satisfaction. '''

    algorithm = algorithm or cfg.sim_algorithm
    sat_fn = satisfaction_source(cfg, surrogate)
    instance = make_instance(cfg, instance_index)
    problem = AllocationProblem.from_channel(cfg.network, instance.channel, instance.contexts, sat_fn)
    front = run_algorithm(algorithm, problem, cfg.population_size, cfg.nfe, _run_seed(cfg, instance_index, 0),
                          **cfg.options(algorithm))
    point, met = select_operating_point(front, cfg.network.min_satisfaction)

    logger.info("Front of %d solutions, operating point f1 %.1f bit/s, f2 %.2f", len(front), point.objectives.f1,
                point.objectives.f2)

    return OptimizeResult(instance=instance, front=front, operating_point=point, target_met=met, problem=problem)
