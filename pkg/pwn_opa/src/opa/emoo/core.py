'''
Shared evolutionary types and the constrained-domination rules every
algorithm builds on. Both objectives are maximised.
'''
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from pymoo.util.nds.non_dominated_sorting import NonDominatedSorting

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Individual:

    ''' A repaired allocation and its evaluation. '''

    genotype: np.ndarray
    objectives: object

    @property
    def feasible(self):

        return self.objectives.feasible

    @property
    def point(self):

        return (self.objectives.f1, self.objectives.f2)


@dataclass(eq=False)
class ParetoFront:

    ''' Mutually non-dominated individuals plus the run that produced them. '''

    members: list
    algorithm: str = ''
    descriptor: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    nfe: int = 0

    def __len__(self):

        return len(self.members)

    def __iter__(self):

        return iter(self.members)

    def objectives(self):

        return np.array([m.point for m in self.members], dtype=float).reshape(-1, 2)

    def points(self):

        return sorted(set(m.point for m in self.members))


def dominates(a, b):

    if a.violation <= 0.0 and b.violation > 0.0:
        return True

    if a.violation > 0.0:
        return b.violation > 0.0 and a.violation < b.violation

    return a.f1 >= b.f1 and a.f2 >= b.f2 and (a.f1 > b.f1 or a.f2 > b.f2)


def objective_arrays(individuals):

    F = np.array([ind.point for ind in individuals], dtype=float).reshape(-1, 2)
    V = np.array([ind.objectives.violation for ind in individuals], dtype=float)

    return F, V


def duplicate_mask(F, V):

    ''' True for every solution whose (f1, f2, violation) already occurred earlier in the list. '''

    keys = np.column_stack([F, V])
    _, first = np.unique(keys, axis=0, return_index=True)
    mask = np.ones(len(keys), dtype=bool)
    mask[first] = False

    return mask


def fast_non_dominated_sort(F, V):

    ''' Constrained fronts, best first: feasible Pareto fronts, then one front per violation level. '''

    F = np.asarray(F, dtype=float).reshape(-1, 2)
    V = np.asarray(V, dtype=float)
    feasible = np.flatnonzero(V <= 0.0)
    infeasible = np.flatnonzero(V > 0.0)
    fronts = []

    if feasible.size:
        # pymoo sorts for minimisation
        fronts.extend(feasible[np.asarray(front, dtype=int)] for front in NonDominatedSorting().do(-F[feasible]))

    for level in np.unique(V[infeasible]):
        fronts.append(infeasible[V[infeasible] == level])

    return fronts


def non_dominated(individuals):

    ''' Constrained first front with duplicate objective pairs collapsed, ordered by f1. '''

    if not individuals:
        return []

    F, V = objective_arrays(individuals)
    candidates = np.flatnonzero(~duplicate_mask(F, V))
    first = candidates[fast_non_dominated_sort(F[candidates], V[candidates])[0]]
    first = first[np.lexsort((F[first, 1], F[first, 0]))]

    return [individuals[i] for i in first]


def build_reference_set(fronts):

    if not fronts:
        raise ValueError("At least one front is required.")

    members = [m for front in fronts for m in front]
    reference = ParetoFront(non_dominated(members), algorithm='reference')

    logger.info("Reference set built: %d solutions from %d fronts", len(reference), len(fronts))

    return reference


def select_operating_point(front, target_avg_sat):

    ''' (largest-f1 member with f2 >= target, True), else (largest-f2 member, False). '''

    members = list(front)

    if not members:
        raise ValueError("Cannot select an operating point from an empty front.")

    qualifying = [m for m in members if m.objectives.f2 >= target_avg_sat]

    if qualifying:
        return max(qualifying, key=lambda m: (m.objectives.f1, m.objectives.f2)), True

    logger.warning("Operating point target %.2f unmet, best average satisfaction %.2f", target_avg_sat,
                   max(m.objectives.f2 for m in members))

    return max(members, key=lambda m: (m.objectives.f2, m.objectives.f1)), False


def rank_merged_solutions(fronts):

    ''' Rank (1 = best) of every member of {algorithm: [front per run]} in their union. '''

    rows = []

    for algorithm, runs in fronts.items():
        for run, front in enumerate(runs):
            rows.extend((algorithm, run, m.objectives.f1, m.objectives.f2, m.objectives.violation) for m in front)

    frame = pd.DataFrame(rows, columns=['algorithm', 'run', 'f1', 'f2', 'violation'])
    rank = np.zeros(len(frame), dtype=int)

    for level, members in enumerate(fast_non_dominated_sort(frame[['f1', 'f2']].to_numpy(), frame['violation'].to_numpy())):
        rank[members] = level + 1

    frame['rank'] = rank

    return frame.drop(columns='violation')
