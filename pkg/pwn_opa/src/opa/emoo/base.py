import logging

import numpy as np

from opa.emoo.core import ParetoFront, non_dominated, objective_arrays
from opa.metrics import Normalisation, hypervolume

logger = logging.getLogger(__name__)


class EvolutionaryAlgorithm:

    '''
    Run bookkeeping shared by every algorithm.

    Subclasses implement run(nfe_budget) and call record after every
    generation and finish once the budget is spent.

    Parameters:
        problem         - AllocationProblem
        population_size - M
        crossover_prob  - Probability of applying HUX to a parent pair
        mutation_prob   - Bit-flip probability, defaults to one expected flip per genotype
        seed            - Run seed
    '''

    name = None

    def __init__(self, problem, population_size=100, crossover_prob=0.9, mutation_prob=None, seed=0):

        if population_size < 2:
            raise ValueError("Population size must be at least 2.")

        self.problem = problem
        self.M = int(population_size)
        self.crossover_prob = float(crossover_prob)
        self.mutation_prob = 1.0 / (problem.num_users * problem.num_rbs) if mutation_prob is None else float(mutation_prob)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.history = []

        # Fixed scale for the per-generation hypervolume trace
        self.trace_normalisation = Normalisation(f1_min=0.0, f1_max=problem.f1_scale)

    def coverage(self, members):

        ''' Hypervolume of the feasible members on the trace scale. '''

        F, _ = objective_arrays([m for m in members if m.feasible])

        return hypervolume(self.trace_normalisation.apply(F))

    def record(self, members, evaluations):

        self.history.append((int(evaluations), self.coverage(members)))

    def check_budget(self, nfe_budget):

        if nfe_budget < self.M:
            raise ValueError("NFE budget {} is smaller than the population size {}.".format(nfe_budget, self.M))

    def descriptor(self, nfe_budget):

        return {'algorithm': self.name, 'seed': int(self.seed) if np.isscalar(self.seed) else str(self.seed),
                'nfe_budget': int(nfe_budget), 'population_size': self.M, 'crossover_prob': self.crossover_prob,
                'mutation_prob': self.mutation_prob}

    def finish(self, members, evaluations, nfe_budget):

        front = ParetoFront(non_dominated(members), algorithm=self.name, descriptor=self.descriptor(nfe_budget),
                            history=list(self.history), nfe=int(evaluations))

        logger.debug("%s finished: %d evaluations, %d front members", self.name, evaluations, len(front))

        return front

    def run(self, nfe_budget):

        raise NotImplementedError
