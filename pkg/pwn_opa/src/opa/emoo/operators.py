import numpy as np
from pymoo.core.crossover import Crossover
from pymoo.core.repair import Repair

from opa.emoo.core import Individual, dominates


def random_genotypes(shape, count, rng):

    ''' Unrepaired genotypes with i.i.d. Bernoulli(0.5) bits. '''

    return (rng.random((count,) + tuple(shape)) < 0.5).astype(np.uint8)


def make_individual(problem, genotype, rng):

    bits = problem.repair(genotype, rng)

    return Individual(genotype=bits, objectives=problem.evaluate(bits))


def init_population(problem, M, seed):

    if M < 2:
        raise ValueError("Population size must be at least 2.")

    rng = np.random.default_rng(seed)

    return [make_individual(problem, g, rng) for g in random_genotypes(problem.shape, M, rng)]


def random_tie(a, b, rng):

    return a if rng.random() < 0.5 else b


def binary_tournament(pop, rng, tie_break=random_tie):

    if len(pop) < 2:
        raise ValueError("A tournament needs at least two individuals.")

    i, j = rng.choice(len(pop), size=2, replace=False)
    a, b = pop[i], pop[j]

    if dominates(a.objectives, b.objectives):
        return a

    if dominates(b.objectives, a.objectives):
        return b

    return tie_break(a, b, rng)


def hux_crossover(p1, p2, rng):

    ''' Swaps exactly half (rounded down) of the differing bits, chosen without replacement. '''

    if p1.shape != p2.shape:
        raise ValueError("Parents must have equal shapes.")

    c1 = p1.copy()
    c2 = p2.copy()
    differing = np.flatnonzero(p1.ravel() != p2.ravel())
    swap = rng.choice(differing, size=len(differing) // 2, replace=False)

    c1.flat[swap] = p2.flat[swap]
    c2.flat[swap] = p1.flat[swap]

    return c1, c2


def bitflip_mutation(geno, p_mut, rng):

    ''' Flips every bit independently with probability p_mut; the caller repairs the result. '''

    if not 0.0 <= p_mut <= 1.0:
        raise ValueError("Mutation probability must lie in [0, 1].")

    flips = rng.random(geno.shape) < p_mut

    return np.where(flips, 1 - geno, geno).astype(np.uint8)


def operator_rng(kwargs):

    ''' The generator pymoo hands to operators, else one drawn from the global state it seeds. '''

    rng = kwargs.get('random_state')

    return rng if rng is not None else np.random.default_rng(np.random.randint(2 ** 31 - 1))


class HalfUniformCrossover(Crossover):

    ''' hux_crossover over pymoo's (parents, matings, bits) layout. '''

    def __init__(self, **kwargs):

        super().__init__(2, 2, **kwargs)

    def _do(self, problem, X, **kwargs):

        rng = operator_rng(kwargs)
        Q = np.empty_like(X)

        for k in range(X.shape[1]):
            Q[0, k], Q[1, k] = hux_crossover(X[0, k], X[1, k], rng)

        return Q


class AllocationRepair(Repair):

    ''' Applies the allocation repair to every flattened genotype. '''

    def _do(self, problem, X, **kwargs):

        rng = operator_rng(kwargs)
        repaired = np.zeros((len(X), problem.n_var), dtype=bool)

        for i, x in enumerate(X):
            repaired[i] = problem.allocation.repair(problem.bits(x), rng).ravel()

        return repaired
