'''
Pareto-front quality indicators: NGR, GD, IGD, SP and HV.

Indicators are computed in normalised objective space. f1 is scaled with the
reference set's bounds, f2 with the fixed level bounds [1, 5], and HV is
measured from the origin of the normalised space. Both objectives are maximised.
'''
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from pymoo.indicators.hv import HV
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

EMPTY_FRONT_DISTANCE = float(np.sqrt(2.0))


def as_points(S):

    ''' (n, 2) float array from a ParetoFront, a list of individuals or objective vectors, or an array. '''

    if isinstance(S, np.ndarray):
        return S.astype(float).reshape(-1, 2)

    members = getattr(S, 'members', S)
    points = []

    for m in members:
        if hasattr(m, 'point'):
            points.append(m.point)

        elif hasattr(m, 'f1'):
            points.append((m.f1, m.f2))

        else:
            points.append(tuple(m))

    return np.array(points, dtype=float).reshape(-1, 2)


def feasible_points(S):

    ''' Objective pairs of the feasible members only. Plain arrays are taken as feasible. '''

    if isinstance(S, np.ndarray):
        return as_points(S)

    members = [m for m in getattr(S, 'members', S) if getattr(getattr(m, 'objectives', m), 'violation', 0.0) <= 0.0]

    return as_points(members)


@dataclass(frozen=True)
class Normalisation:

    f1_min: float
    f1_max: float
    f2_min: float = 1.0
    f2_max: float = 5.0

    @classmethod
    def from_reference(cls, R):

        P = as_points(R)

        if len(P) == 0:
            raise ValueError("Cannot normalise against an empty reference set.")

        return cls(f1_min=float(P[:, 0].min()), f1_max=float(P[:, 0].max()))

    def apply(self, S):

        P = as_points(S)
        low = np.array([self.f1_min, self.f2_min])
        span = np.array([self.f1_max, self.f2_max]) - low

        return (P - low) / np.where(span > 0.0, span, 1.0)


@dataclass(frozen=True)
class MetricReport:

    hv: float
    gd: float
    igd: float
    sp: float
    ngr: float
    reference_point: tuple
    normalisation: Normalisation
    clipped: int = 0

    def as_dict(self):

        return {'hv': self.hv, 'gd': self.gd, 'igd': self.igd, 'sp': self.sp, 'ngr': self.ngr}


def ngr(S, R):

    ''' Capacity ratio |S| / |R|. '''

    if len(as_points(R)) == 0:
        raise ValueError("Reference set must not be empty.")

    return len(as_points(S)) / len(as_points(R))


def _nearest_distance(P, Q, metric='euclidean'):

    return cdist(P, Q, metric=metric).min(axis=1)


def gd(S, R):

    ''' Generational distance: root of the summed squared nearest distances, divided by |S|. '''

    P, Q = as_points(S), as_points(R)

    if len(P) == 0 or len(Q) == 0:
        raise ValueError("GD needs non-empty solution and reference sets.")

    return float(np.sqrt((_nearest_distance(P, Q) ** 2).sum()) / len(P))


def igd(S, R):

    ''' Inverted generational distance: as gd with the roles of S and R exchanged. '''

    P, Q = as_points(S), as_points(R)

    if len(P) == 0 or len(Q) == 0:
        raise ValueError("IGD needs non-empty solution and reference sets.")

    return float(np.sqrt((_nearest_distance(Q, P) ** 2).sum()) / len(Q))


def spacing(S):

    ''' Spread of Manhattan nearest-neighbour distances around their mean. '''

    P = as_points(S)

    if len(P) < 2:
        raise ValueError("Spacing needs at least two solutions.")

    distance = cdist(P, P, metric='cityblock')
    np.fill_diagonal(distance, np.inf)
    d = distance.min(axis=1)

    return float(np.sqrt(((d - d.mean()) ** 2).sum() / (len(P) - 1)))


def hypervolume_with_clipped(S, ref_point=(0.0, 0.0)):

    '''
    Exact two-objective hypervolume under maximisation.

    Points that do not weakly dominate ref_point are left out and counted.

    Returns:
        (hv, clipped)
    '''

    P = as_points(S)
    ref = np.asarray(ref_point, dtype=float)
    inside = np.all(P >= ref, axis=1)
    clipped = int((~inside).sum())
    P = P[inside]

    if clipped:
        logger.debug("Hypervolume clipped %d points outside the reference box", clipped)

    if len(P) == 0:
        return 0.0, clipped

    # pymoo minimises, so the front and the reference point are mirrored
    return float(HV(ref_point=-ref)(-P)), clipped


def hypervolume(S, ref_point=(0.0, 0.0)):

    return hypervolume_with_clipped(S, ref_point)[0]


def assess_front(S, R, normalisation=None):

    '''
    Every indicator of a front against a reference set.

    Infeasible members are ignored. A front without feasible members scores
    HV and NGR 0 and distance EMPTY_FRONT_DISTANCE; a single-member front has SP 0.
    '''

    reference = feasible_points(R)

    if len(reference) == 0:
        reference = as_points(R)

    norm = normalisation or Normalisation.from_reference(reference)
    P = norm.apply(feasible_points(S))
    Q = norm.apply(reference)
    hv, clipped = hypervolume_with_clipped(P)

    if clipped:
        logger.warning("Hypervolume clipped %d of %d front points", clipped, len(P))

    if len(P) == 0:
        return MetricReport(hv=0.0, gd=EMPTY_FRONT_DISTANCE, igd=EMPTY_FRONT_DISTANCE, sp=0.0, ngr=0.0,
                            reference_point=(0.0, 0.0), normalisation=norm, clipped=clipped)

    return MetricReport(hv=hv, gd=gd(P, Q), igd=igd(P, Q), sp=spacing(P) if len(P) >= 2 else 0.0, ngr=ngr(P, Q),
                        reference_point=(0.0, 0.0), normalisation=norm, clipped=clipped)
