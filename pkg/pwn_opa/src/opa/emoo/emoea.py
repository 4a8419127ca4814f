import numpy as np

from opa.emoo.base import EvolutionaryAlgorithm
from opa.emoo.core import dominates
from opa.emoo.operators import binary_tournament, bitflip_mutation, hux_crossover, init_population, make_individual


def weakly_dominates(a, b):

    return a.objectives.f1 >= b.objectives.f1 and a.objectives.f2 >= b.objectives.f2


class EpsilonMOEA(EvolutionaryAlgorithm):

    '''
    Steady-state epsilon-dominance MOEA.

    Each step mates a tournament winner from the population with a random
    archive member and offers the single child to both. The archive keeps at
    most one member per epsilon-box of the scaled objectives (f1 / mean demand,
    f2 / 5) and never accepts a child that lowers its hypervolume. While no
    feasible solution is known it holds the single least-violating one.
    '''

    name = 'emoea'

    def __init__(self, problem, epsilon=0.02, **kwargs):

        super().__init__(problem, **kwargs)

        if epsilon <= 0.0:
            raise ValueError("epsilon must be positive.")

        self.epsilon = float(epsilon)
        self.scale = np.array([problem.f1_scale, 5.0])
        self.population = []
        self.archive = []

    def run(self, nfe_budget):

        self.check_budget(nfe_budget)
        self.population = init_population(self.problem, self.M, self.rng)
        self.archive = []

        for ind in self.population:
            self.accept_archive(ind)

        evaluations = self.M
        self.record(self.archive, evaluations)

        while evaluations < nfe_budget:
            n = min(self.M, int(nfe_budget) - evaluations)
            self.step(n)
            evaluations += n
            self.record(self.archive, evaluations)

        return self.finish(self.archive, evaluations, nfe_budget)

    def step(self, n):

        for _ in range(n):
            parent = binary_tournament(self.population, self.rng).genotype
            mate = self.archive[self.rng.integers(len(self.archive))].genotype

            if self.rng.random() < self.crossover_prob:
                child, _ = hux_crossover(parent, mate, self.rng)

            else:
                child = parent.copy()

            child = make_individual(self.problem, bitflip_mutation(child, self.mutation_prob, self.rng), self.rng)
            self.accept_population(child)
            self.accept_archive(child)

    def scaled(self, ind):

        return np.array(ind.point) / self.scale

    def box(self, ind):

        return np.floor(self.scaled(ind) / self.epsilon).astype(int)

    def accept_population(self, child):

        dominated = [i for i, m in enumerate(self.population) if dominates(child.objectives, m.objectives)]

        if dominated:
            self.population[dominated[self.rng.integers(len(dominated))]] = child

        elif not any(dominates(m.objectives, child.objectives) for m in self.population):
            self.population[self.rng.integers(len(self.population))] = child

    def accept_archive(self, child):

        if not child.feasible:
            if not self.archive or (not self.archive[0].feasible and child.objectives.violation < self.archive[0].objectives.violation):
                self.archive = [child]
            return

        if self.archive and not self.archive[0].feasible:
            self.archive = [child]
            return

        box = self.box(child)
        boxes = [self.box(m) for m in self.archive]

        if any(np.all(b >= box) and np.any(b > box) for b in boxes):
            return

        survivors = []
        removed = []

        for member, b in zip(self.archive, boxes):
            if np.all(box >= b) and np.any(box > b):
                removed.append(member)

            elif np.array_equal(box, b):
                if not self.replaces(child, member, box):
                    return
                removed.append(member)

            else:
                survivors.append(member)

        survivors.append(child)

        # a box-dominated member can still cover area the child does not
        if any(not weakly_dominates(child, m) for m in removed) and self.coverage(survivors) < self.coverage(self.archive):
            return

        self.archive = survivors

    def replaces(self, child, incumbent, box):

        ''' Same-box contest: dominance first, then distance to the box's best corner. '''

        if dominates(child.objectives, incumbent.objectives):
            return True

        if dominates(incumbent.objectives, child.objectives):
            return False

        corner = (box + 1) * self.epsilon

        return np.linalg.norm(self.scaled(child) - corner) < np.linalg.norm(self.scaled(incumbent) - corner)
