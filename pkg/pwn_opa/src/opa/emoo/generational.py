'''
Generational algorithms run through pymoo: NSGA-II, NSGA-III and SPEA2.

pymoo minimises, so both objectives are negated on the way in and out, and
the satisfaction shortfall is the single inequality constraint. Each
generation's offspring count is trimmed so a run spends exactly its budget.
'''
import logging

import numpy as np
from pymoo.algorithms.moo.nsga2 import NSGA2 as PymooNSGA2
from pymoo.algorithms.moo.nsga3 import NSGA3 as PymooNSGA3
from pymoo.algorithms.moo.spea2 import SPEA2 as PymooSPEA2
from pymoo.core.population import Population
from pymoo.core.problem import Problem
from pymoo.core.survival import Survival
from pymoo.operators.mutation.bitflip import BitflipMutation
from pymoo.operators.sampling.rnd import BinaryRandomSampling
from pymoo.util.ref_dirs import get_reference_directions

from opa.emoo.base import EvolutionaryAlgorithm
from opa.emoo.core import Individual
from opa.emoo.operators import AllocationRepair, HalfUniformCrossover
from opa.netmodel import ObjectiveVector

logger = logging.getLogger(__name__)


def run_seed(seed):

    ''' 31-bit integer seed for pymoo from any numpy seed. '''

    return int(np.random.default_rng(seed).integers(2 ** 31 - 1))


class AllocationSearchProblem(Problem):

    ''' Flattened-bit view of an AllocationProblem. '''

    def __init__(self, allocation):

        self.allocation = allocation
        super().__init__(n_var=int(np.prod(allocation.shape)), n_obj=2, n_ieq_constr=1, xl=0, xu=1, vtype=bool)

    def bits(self, x):

        return np.asarray(x, dtype=np.uint8).reshape(self.allocation.shape)

    def _evaluate(self, X, out, *args, **kwargs):

        objectives = [self.allocation.evaluate(self.bits(x)) for x in X]

        out['F'] = -np.array([[o.f1, o.f2] for o in objectives], dtype=float).reshape(-1, 2)
        out['G'] = np.array([[o.violation] for o in objectives], dtype=float).reshape(-1, 1)


class DistinctSurvival(Survival):

    '''
    Lets repeated objective vectors survive only after every distinct one.

    Repeats that still get in carry crowding 0 for crowded tournaments.
    '''

    def __init__(self, survival):

        super().__init__(filter_infeasible=False)
        self.survival = survival

    def __getattr__(self, name):

        if name == 'survival':
            raise AttributeError(name)

        return getattr(self.survival, name)

    def _do(self, problem, pop, *args, n_survive=None, **kwargs):

        n_survive = len(pop) if n_survive is None else n_survive

        _, first = np.unique(np.column_stack([pop.get('F'), pop.get('G')]), axis=0, return_index=True)
        first = np.sort(first)
        survivors = self.survival.do(problem, pop[first], *args, n_survive=min(n_survive, len(first)), **kwargs)
        missing = n_survive - len(survivors)

        if missing > 0:
            repeats = pop[np.setdiff1d(np.arange(len(pop)), first)[:missing]]
            repeats.set('crowding', np.zeros(len(repeats)))
            survivors = Population.merge(survivors, repeats)

        return survivors


class PymooAlgorithm(EvolutionaryAlgorithm):

    ''' Drives a pymoo algorithm generation by generation on an AllocationProblem. '''

    def operators(self):

        return {'sampling': BinaryRandomSampling(), 'crossover': HalfUniformCrossover(prob=self.crossover_prob),
                'mutation': BitflipMutation(prob=1.0, prob_var=self.mutation_prob), 'repair': AllocationRepair(),
                'eliminate_duplicates': False}

    def build(self):

        raise NotImplementedError

    def members(self, pop):

        shape = self.problem.shape
        X, F, G = pop.get('X'), pop.get('F'), pop.get('G')

        return [Individual(genotype=np.asarray(x, dtype=np.uint8).reshape(shape),
                           objectives=ObjectiveVector(f1=float(-f[0]), f2=float(-f[1]), violation=float(g[0])))
                for x, f, g in zip(X, F, G)]

    def run(self, nfe_budget):

        self.check_budget(nfe_budget)
        seed = run_seed(self.seed)
        np.random.seed(seed)

        algorithm = self.build()
        algorithm.setup(AllocationSearchProblem(self.problem), termination=('n_eval', int(nfe_budget)), seed=seed,
                        verbose=False)

        while algorithm.has_next():
            if algorithm.is_initialized:
                algorithm.n_offsprings = min(self.M, int(nfe_budget) - algorithm.evaluator.n_eval)

            algorithm.next()
            self.record(self.members(algorithm.pop), algorithm.evaluator.n_eval)

        return self.finish(self.members(algorithm.pop), algorithm.evaluator.n_eval, nfe_budget)


class NSGA2(PymooAlgorithm):

    ''' Non-dominated sorting with crowding-distance truncation and crowded tournaments. '''

    name = 'nsga2'

    def build(self):

        algorithm = PymooNSGA2(pop_size=self.M, **self.operators())
        algorithm.survival = DistinctSurvival(algorithm.survival)

        return algorithm


class NSGA3(PymooAlgorithm):

    '''
    Non-dominated sorting with reference-direction niching.

    Das-Dennis directions are capped at M so every direction can hold a member.
    '''

    name = 'nsga3'

    def __init__(self, problem, divisions=99, **kwargs):

        super().__init__(problem, **kwargs)
        self.divisions = int(divisions)

    def build(self):

        directions = get_reference_directions('das-dennis', 2, n_partitions=min(self.divisions, self.M - 1))
        algorithm = PymooNSGA3(ref_dirs=directions, pop_size=self.M, **self.operators())
        algorithm.survival = DistinctSurvival(algorithm.survival)

        return algorithm


class SPEA2(PymooAlgorithm):

    ''' Strength Pareto archive of size M with nearest-neighbour truncation. '''

    name = 'spea2'

    def build(self):

        return PymooSPEA2(pop_size=self.M, **self.operators())
