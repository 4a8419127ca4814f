'''
Single-cell downlink model: channel gains, SNR, per-RB rates, the binary
user x RB allocation genotype, its repair, and evaluation of both objectives.

Allocations are plain numpy arrays of shape (num_users, num_rbs) holding 0/1.
Rates are in bit/s throughout; satisfaction oracles take deltas in kbps.
'''
from __future__ import annotations

import dataclasses
import logging
import threading
from dataclasses import dataclass, field

import numpy as np

from opa.config import get_param, load_params
from opa.errors import ConfigError, UnrepairedAllocationError
from utils.unit_conversion import db_to_linear, dbm_to_watts

logger = logging.getLogger(__name__)

PATHLOSS_INTERCEPT_DB = 38.46
PATHLOSS_SLOPE_DB = 35.0
MIN_DISTANCE_M = 10.0

NETWORK_KEYS = ('num_rbs', 'rb_bandwidth_hz', 'noise_density_dbm_hz', 'carrier_freq_hz', 'max_power_w',
                'grid_size', 'num_users', 'min_satisfaction', 'cell_radius_m')


@dataclass(frozen=True)
class NetworkConfig:

    ''' Physical-layer and problem constants. noise_density is in W/Hz. '''

    num_rbs: int = 100
    rb_bandwidth: float = 180e3
    noise_density: float = dbm_to_watts(-174.0)
    carrier_freq: float = 2e9
    max_power: float = 1.0
    grid_size: int = 100
    num_users: int = 4
    min_satisfaction: int = 4
    cell_radius: float = 500.0
    per_rb_power: float = None

    def __post_init__(self):

        if self.per_rb_power is None:
            object.__setattr__(self, 'per_rb_power', self.max_power / self.num_rbs)

        if self.num_rbs < 1 or self.num_users < 1 or self.grid_size < 1:
            raise ConfigError("num_rbs, num_users and grid_size must be at least 1.")

        if self.rb_bandwidth <= 0.0 or self.noise_density <= 0.0:
            raise ConfigError("rb_bandwidth and noise_density must be positive.")

        if not 1 <= self.min_satisfaction <= 5:
            raise ConfigError("min_satisfaction must lie in [1, 5], got {}.".format(self.min_satisfaction))

        if self.per_rb_power < 0.0 or self.per_rb_power * self.num_rbs > self.max_power * (1.0 + 1e-12):
            raise ConfigError("per_rb_power x num_rbs exceeds max_power.")

        if self.cell_radius <= MIN_DISTANCE_M:
            raise ConfigError("cell_radius must exceed the {} m minimum distance.".format(MIN_DISTANCE_M))

    @classmethod
    def from_params(cls, params):

        ''' Builds the config from the "network" section of a parameter dictionary. '''

        network = get_param(params, '/network')
        unknown = sorted(set(network) - set(NETWORK_KEYS))

        if unknown:
            raise ConfigError("Unknown network parameters: {}. Check the configuration file.".format(', '.join(unknown)))

        values = dict((key, get_param(params, '/network/' + key)) for key in NETWORK_KEYS)

        try:
            return cls(num_rbs=int(values['num_rbs']),
                       rb_bandwidth=float(values['rb_bandwidth_hz']),
                       noise_density=dbm_to_watts(float(values['noise_density_dbm_hz'])),
                       carrier_freq=float(values['carrier_freq_hz']),
                       max_power=float(values['max_power_w']),
                       grid_size=int(values['grid_size']),
                       num_users=int(values['num_users']),
                       min_satisfaction=int(values['min_satisfaction']),
                       cell_radius=float(values['cell_radius_m']))

        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError("Invalid network parameter: {}".format(e)) from e

    @classmethod
    def from_file(cls, path=None):

        return cls.from_params(load_params(path))

    @property
    def noise_power(self):

        ''' Per-RB noise power N0 * B_RB in watts. '''

        return self.noise_density * self.rb_bandwidth

    def with_users(self, num_users):

        return dataclasses.replace(self, num_users=int(num_users))


@dataclass(frozen=True, eq=False)
class ChannelState:

    gains: np.ndarray
    positions: np.ndarray
    seed: int

    def __post_init__(self):

        if not np.all(np.isfinite(self.gains)) or np.any(self.gains <= 0.0):
            raise ValueError("Channel gains must be finite and strictly positive.")

        if self.positions.shape != (self.gains.shape[0], 2):
            raise ValueError("One grid position is required per user.")


@dataclass(frozen=True)
class ObjectiveVector:

    ''' f1: mean saved rate in bit/s, f2: mean satisfaction level, both maximised. '''

    f1: float
    f2: float
    violation: float = 0.0

    @property
    def feasible(self):

        return self.violation <= 0.0

    def as_array(self):

        return np.array([self.f1, self.f2], dtype=float)


@dataclass(frozen=True, eq=False)
class RateReport:

    per_rb_rate: np.ndarray
    user_rate: np.ndarray
    demand: np.ndarray
    user_delta: np.ndarray
    sum_delta: float
    total_rate: float


@dataclass(frozen=True, eq=False)
class Assessment:

    report: RateReport
    levels: np.ndarray
    objectives: ObjectiveVector


class EvaluationCounter:

    ''' Lock-guarded fitness evaluation counter. '''

    def __init__(self):

        self.count = 0
        self.lock = threading.Lock()

    def increment(self, n=1):

        with self.lock:
            self.count += n

    def reset(self):

        with self.lock:
            self.count = 0

    def __getstate__(self):

        return {'count': self.count}

    def __setstate__(self, state):

        self.count = state['count']
        self.lock = threading.Lock()


# Process-wide NFE accounting; each worker process keeps its own copy
NFE = EvaluationCounter()


def path_loss_db(distance_m):

    return PATHLOSS_INTERCEPT_DB + PATHLOSS_SLOPE_DB * np.log10(distance_m)


def cell_distance(cfg, positions):

    '''
    Maps grid cells to distances from the eNB at the cell centre.

    The k x k grid is laid over the square circumscribing the cell disc and
    distances are clipped to [MIN_DISTANCE_M, cell_radius].
    '''

    positions = np.asarray(positions, dtype=float)
    centre = (positions + 0.5) / cfg.grid_size - 0.5
    d = np.hypot(centre[:, 0], centre[:, 1]) * 2.0 * cfg.cell_radius

    return np.clip(d, MIN_DISTANCE_M, cfg.cell_radius)


def rayleigh_power(rng, shape):

    ''' |g|^2 for unit-variance circularly-symmetric complex Gaussian g. '''

    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    return np.maximum(np.abs(g) ** 2, np.finfo(float).tiny)


def draw_channel(cfg, seed, positions=None):

    '''
    Draws one block-fading channel realisation.

    Arguments:
        cfg         - NetworkConfig
        seed        - Integer seed, the realisation is a pure function of (cfg, seed, positions)
        positions   - Optional (num_users, 2) grid cells, drawn uniformly when omitted
    '''

    rng = np.random.default_rng(seed)

    if positions is None:
        positions = rng.integers(0, cfg.grid_size, size=(cfg.num_users, 2))

    positions = np.asarray(positions, dtype=int)

    if positions.shape != (cfg.num_users, 2):
        raise ValueError("Expected {} user positions, got shape {}.".format(cfg.num_users, positions.shape))

    if np.any(positions < 0) or np.any(positions >= cfg.grid_size):
        raise ValueError("User positions must lie within the {0} x {0} grid.".format(cfg.grid_size))

    fading = rayleigh_power(rng, (cfg.num_users, cfg.num_rbs))
    large_scale = db_to_linear(-path_loss_db(cell_distance(cfg, positions)))
    gains = fading * large_scale[:, np.newaxis]

    return ChannelState(gains=gains, positions=positions, seed=int(seed))


def snr(cfg, ch, user, rb):

    return cfg.per_rb_power * ch.gains[user, rb] / cfg.noise_power


def snr_matrix(cfg, ch):

    return cfg.per_rb_power * ch.gains / cfg.noise_power


def rb_rate(cfg, gamma):

    ''' Shannon rate B_RB * log2(1 + gamma) in bit/s. '''

    if np.any(np.asarray(gamma) < 0.0):
        raise ValueError("SNR must be non-negative.")

    return cfg.rb_bandwidth * np.log2(1.0 + gamma)


def rate_matrix(cfg, ch):

    return rb_rate(cfg, snr_matrix(cfg, ch))


def demand_vector(contexts):

    ''' Demanded rates of a list of UserContext in bit/s. '''

    return np.array([ctx.demand_rate * 1000.0 for ctx in contexts], dtype=float)


def rate_report(per_rb_rate, bits, demand):

    bits = np.asarray(bits)
    demand = np.asarray(demand, dtype=float)
    user_rate = (bits * per_rb_rate).sum(axis=1)
    user_delta = demand - user_rate

    return RateReport(per_rb_rate=per_rb_rate, user_rate=user_rate, demand=demand, user_delta=user_delta,
                      sum_delta=float(user_delta.sum()), total_rate=float(user_rate.sum()))


def assigned_power(cfg, bits):

    return cfg.per_rb_power * float(np.asarray(bits).sum())


def repair_allocation(bits, per_rb_rate, demand, rng):

    '''
    Makes an allocation satisfy the one-owner-per-RB and rate <= demand constraints.

    1. Every RB claimed by several users keeps one claimant, chosen uniformly at random
    2. Every user whose rate exceeds its demand loses RBs in ascending per-RB rate
       order (stable on RB index) until its rate no longer exceeds the demand

    The second step may overshoot and leave the user well under its demand.
    '''

    rng = np.random.default_rng(rng)
    out = np.array(bits, dtype=np.uint8, copy=True)

    for n in np.flatnonzero(out.sum(axis=0) > 1):
        claimants = np.flatnonzero(out[:, n])
        keep = rng.choice(claimants)
        out[:, n] = 0
        out[keep, n] = 1

    user_rate = (out * per_rb_rate).sum(axis=1)

    for u in np.flatnonzero(user_rate > demand):
        assigned = np.flatnonzero(out[u])
        order = assigned[np.argsort(per_rb_rate[u, assigned], kind='stable')]

        # remaining[k] is the user's rate after dropping the k slowest RBs
        remaining = np.append(np.cumsum(per_rb_rate[u, order][::-1])[::-1], 0.0)
        k = int(np.argmax(remaining <= demand[u]))
        out[u, order[:k]] = 0

    return out


def repair(alloc, rates, rng_seed):

    ''' Repairs alloc against the per-RB rates and demands held in a RateReport. '''

    return repair_allocation(alloc, rates.per_rb_rate, rates.demand, rng_seed)


def satisfaction_levels(sat_fn, contexts, delta_kbps):

    ''' Queries an oracle for every user, batched when the oracle supports it. '''

    batch = getattr(sat_fn, 'levels', None)

    if batch is not None:
        return np.asarray(batch(contexts, delta_kbps), dtype=int)

    return np.array([sat_fn(ctx, d) for ctx, d in zip(contexts, delta_kbps)], dtype=int)


def check_repaired(bits):

    if np.any(np.asarray(bits).sum(axis=0) > 1):
        raise UnrepairedAllocationError("Allocation assigns a resource block to more than one user; repair it first.")


def objectives_from(report, levels, min_levels):

    num_users = len(levels)
    violation = float(np.maximum(0, np.asarray(min_levels) - levels).sum())

    return ObjectiveVector(f1=report.sum_delta / num_users, f2=float(levels.mean()), violation=violation)


def evaluate(cfg, ch, alloc, contexts, sat_fn):

    '''
    Evaluates both objectives and the satisfaction constraint of a repaired allocation.

    Increments the process-wide NFE counter.
    '''

    check_repaired(alloc)
    report = rate_report(rate_matrix(cfg, ch), alloc, demand_vector(contexts))
    levels = satisfaction_levels(sat_fn, contexts, report.user_delta / 1000.0)
    NFE.increment()

    return objectives_from(report, levels, np.full(len(contexts), cfg.min_satisfaction))


class AllocationProblem:

    '''
    One optimisation instance: rates, demands, user contexts and a satisfaction oracle.

    Parameters:
        per_rb_rate     - (num_users, num_rbs) achievable rate of every RB for every user, bit/s
        demand          - Demanded rate per user, bit/s
        contexts        - UserContext per user, passed to the oracle
        sat_fn          - Satisfaction oracle (context, delta_kbps) -> level, optionally batched via .levels
        min_levels      - Minimum satisfaction per user (scalar or per-user)
    '''

    def __init__(self, per_rb_rate, demand, contexts, sat_fn, min_levels=4):

        self.per_rb_rate = np.asarray(per_rb_rate, dtype=float)
        self.demand = np.asarray(demand, dtype=float)
        self.contexts = list(contexts)
        self.sat_fn = sat_fn
        self.min_levels = np.broadcast_to(np.asarray(min_levels, dtype=int), self.demand.shape).copy()
        self.counter = EvaluationCounter()

        if self.per_rb_rate.ndim != 2 or self.per_rb_rate.shape[0] != len(self.demand):
            raise ValueError("Rate matrix must have one row per user.")

        if len(self.contexts) != len(self.demand):
            raise ValueError("One context is required per user.")

        if np.any(self.demand < 0.0):
            raise ValueError("Demands must be non-negative.")

    @classmethod
    def from_channel(cls, cfg, ch, contexts, sat_fn, min_levels=None):

        min_levels = cfg.min_satisfaction if min_levels is None else min_levels

        return cls(rate_matrix(cfg, ch), demand_vector(contexts), contexts, sat_fn, min_levels)

    def with_oracle(self, sat_fn):

        ''' Same instance, different satisfaction oracle, fresh NFE counter. '''

        return AllocationProblem(self.per_rb_rate, self.demand, self.contexts, sat_fn, self.min_levels)

    @property
    def shape(self):

        return self.per_rb_rate.shape

    @property
    def num_users(self):

        return self.per_rb_rate.shape[0]

    @property
    def num_rbs(self):

        return self.per_rb_rate.shape[1]

    @property
    def nfe(self):

        return self.counter.count

    @property
    def f1_scale(self):

        ''' Mean demand, the natural unit of f1. '''

        mean_demand = float(self.demand.mean())

        return mean_demand if mean_demand > 0.0 else 1.0

    def repair(self, bits, rng):

        return repair_allocation(bits, self.per_rb_rate, self.demand, rng)

    def assess(self, bits, count=True):

        check_repaired(bits)
        report = rate_report(self.per_rb_rate, bits, self.demand)
        levels = satisfaction_levels(self.sat_fn, self.contexts, report.user_delta / 1000.0)

        if count:
            self.counter.increment()
            NFE.increment()

        return Assessment(report=report, levels=levels, objectives=objectives_from(report, levels, self.min_levels))

    def evaluate(self, bits):

        return self.assess(bits).objectives
