from opa.config import get_param
from opa.emoo.core import (Individual, ParetoFront, build_reference_set, dominates,
                           fast_non_dominated_sort, non_dominated, rank_merged_solutions, select_operating_point)
from opa.emoo.emoea import EpsilonMOEA
from opa.emoo.generational import NSGA2, NSGA3, SPEA2
from opa.emoo.operators import binary_tournament, bitflip_mutation, hux_crossover, init_population

ALGORITHMS = {'nsga2': NSGA2, 'nsga3': NSGA3, 'spea2': SPEA2, 'emoea': EpsilonMOEA}


def algorithm_options(params, name):

    ''' Keyword options for one algorithm from the "emoo" section. '''

    options = {'crossover_prob': float(get_param(params, '/emoo/crossover_prob')),
               'mutation_prob': get_param(params, '/emoo/mutation_prob', None)}

    if name == 'emoea':
        options['epsilon'] = float(get_param(params, '/emoo/epsilon'))

    elif name == 'nsga3':
        options['divisions'] = int(get_param(params, '/emoo/nsga3_divisions'))

    return options


def run_algorithm(name, problem, M=100, nfe_budget=1000, seed=0, **options):

    '''
    Runs one algorithm on one problem until nfe_budget evaluations are spent.

    Arguments:
        name        - One of ALGORITHMS
        problem     - AllocationProblem
        M           - Population (and archive) size
        nfe_budget  - Evaluation budget, at least M
        seed        - Run seed
        options     - Algorithm keyword options, e.g. crossover_prob, epsilon
    '''

    try:
        algorithm = ALGORITHMS[name]

    except KeyError:
        raise ValueError("Unknown algorithm '{}', expected one of {}.".format(name, ', '.join(ALGORITHMS))) from None

    return algorithm(problem, population_size=M, seed=seed, **options).run(nfe_budget)
