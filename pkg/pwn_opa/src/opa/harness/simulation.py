'''
Time-slot simulation of the three network policies.

Every slot draws the users' contexts from the persona stream and a channel at
their grid cells; each enabled policy then allocates on that same instance:

    npn - greedy maximum-rate baseline, blind to satisfaction
    fpn - optimiser driven by the ground-truth satisfaction oracle
    spn - optimiser driven by the trained surrogate

Satisfaction reported as "feedback" is always measured by the oracle.
'''
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from datetime import datetime

import numpy as np
import pandas as pd

from opa.config import get_param
from opa.emoo import run_algorithm, select_operating_point
from opa.errors import HarnessError
from opa.harness.experiments import SIMULATION_KEY, greedy_max_rate
from opa.netmodel import AllocationProblem, demand_vector, draw_channel, rate_matrix
from opa.satisfaction import ContextStream, ZoneOfToleranceOracle, persona_from_params
from opa.surrogate import SurrogateManager
from utils.config_hash import derive_seed

logger = logging.getLogger(__name__)

SLOT_COLUMNS = ('slot', 'time_s', 'rate_npn', 'rate_fpn', 'rate_spn', 'saved_npn', 'saved_fpn', 'saved_spn', 'sat_npn',
                'sat_fpn', 'sat_spn_estimated', 'sat_spn_feedback', 'fpn_met', 'spn_met')


@dataclass(frozen=True)
class SimulationRecord:

    '''
    Averages over one window of time slots.

    saved_<mode> is the NPN total rate minus the mode's total rate in bit/s.
    Columns of disabled modes hold NaN.
    '''

    window: int
    start_s: float
    end_s: float
    slots: int
    saved_npn: float
    saved_fpn: float
    saved_spn: float
    sat_npn: float
    sat_fpn: float
    sat_spn_estimated: float
    sat_spn_feedback: float
    fpn_met: float
    spn_met: float
    config_hash: str = ''
    seed: int = 0

    def as_dict(self):

        return asdict(self)


def records_frame(records):

    return pd.DataFrame([r.as_dict() for r in records], columns=[f.name for f in fields(SimulationRecord)])


class PolicySimulator:

    '''
    Steps the policies one time slot at a time.

    Arguments:
        cfg         - ExperimentConfig
        surrogate   - Trained surrogate, required when spn is enabled
    '''

    def __init__(self, cfg, surrogate=None):

        self.cfg = cfg
        self.modes = set(cfg.modes)
        self.seed = derive_seed(cfg.seed, SIMULATION_KEY)
        self.oracle = ZoneOfToleranceOracle()

        if 'spn' in self.modes and surrogate is None:
            raise HarnessError("spn mode requires a trained surrogate. Run 'train' first.")

        self.surrogate = surrogate
        self.manager = None

        if 'spn' in self.modes and cfg.manage_surrogate:
            self.manager = SurrogateManager(surrogate,
                                            r_delta_step=float(get_param(cfg.params, '/surrogate/r_delta_step_kbps')),
                                            buffer_size=int(get_param(cfg.params, '/surrogate/buffer_size')),
                                            feedback_fn=self.oracle,
                                            epochs=int(get_param(cfg.params, '/surrogate/fine_tune_epochs')))

        start = datetime.strptime(get_param(cfg.params, '/persona/start'), '%Y-%m-%d %H:%M:%S')
        self.stream = ContextStream(persona_from_params(cfg.params), cfg.network.num_users, start, cfg.ts_seconds,
                                    cfg.network.grid_size, seed=self.seed)
        self.slot = 0

    @property
    def num_slots(self):

        return int(round(self.cfg.simulation_minutes * 60.0 / self.cfg.ts_seconds))

    @property
    def model(self):

        return self.manager.model if self.manager is not None else self.surrogate

    def _optimise(self, problem, run_seed):

        cfg = self.cfg
        front = run_algorithm(cfg.sim_algorithm, problem, cfg.population_size, cfg.nfe, run_seed,
                              **cfg.options(cfg.sim_algorithm))

        return select_operating_point(front, cfg.network.min_satisfaction)

    def step(self):

        ''' Simulates one time slot, returns its row as a dictionary. '''

        cfg = self.cfg
        t = self.slot
        contexts = self.stream.step()
        channel = draw_channel(cfg.network, derive_seed(self.seed, t), positions=[c.location for c in contexts])
        rates = rate_matrix(cfg.network, channel)
        demand = demand_vector(contexts)
        oracle_problem = AllocationProblem(rates, demand, contexts, self.oracle, cfg.network.min_satisfaction)
        run_seed = derive_seed(self.seed, t, 1)

        row = dict((c, np.nan) for c in SLOT_COLUMNS)
        row['slot'] = t
        row['time_s'] = t * cfg.ts_seconds

        npn = oracle_problem.assess(greedy_max_rate(rates, demand), count=False)
        row['rate_npn'] = npn.report.total_rate
        row['saved_npn'] = 0.0

        if 'npn' in self.modes:
            row['sat_npn'] = float(npn.levels.mean())

        if 'fpn' in self.modes:
            point, met = self._optimise(oracle_problem, run_seed)
            fpn = oracle_problem.assess(point.genotype, count=False)
            row['rate_fpn'] = fpn.report.total_rate
            row['saved_fpn'] = row['rate_npn'] - fpn.report.total_rate
            row['sat_fpn'] = float(fpn.levels.mean())
            row['fpn_met'] = float(met)

        if 'spn' in self.modes:
            spn_problem = oracle_problem.with_oracle(self.model)
            point, met = self._optimise(spn_problem, run_seed)
            estimated = spn_problem.assess(point.genotype, count=False)
            feedback = oracle_problem.assess(point.genotype, count=False)
            row['rate_spn'] = feedback.report.total_rate
            row['saved_spn'] = row['rate_npn'] - feedback.report.total_rate
            row['sat_spn_estimated'] = float(estimated.levels.mean())
            row['sat_spn_feedback'] = float(feedback.levels.mean())
            row['spn_met'] = float(met)

            if self.manager is not None:
                deltas = feedback.report.user_delta / 1000.0

                for ctx, delta, predicted, measured in zip(contexts, deltas, estimated.levels, feedback.levels):
                    self.manager.observe(ctx, delta, predicted, measured)

        self.slot += 1

        return row


def simulate_slots(cfg, surrogate=None):

    ''' Per-slot DataFrame of the whole simulation, columns SLOT_COLUMNS. '''

    simulator = PolicySimulator(cfg, surrogate)
    rows = []

    for t in range(simulator.num_slots):
        rows.append(simulator.step())

        if (t + 1) % 60 == 0:
            logger.info("Simulated %d/%d time slots", t + 1, simulator.num_slots)

    if simulator.manager is not None:
        logger.info("Surrogate management: %d corrections, %d retrains, %d rejected", len(simulator.manager.log),
                    simulator.manager.retrains, simulator.manager.rejected)

    return pd.DataFrame(rows, columns=list(SLOT_COLUMNS))


def aggregate_windows(frame, cfg, config_hash='', seed=0):

    '''
    Averages per-slot rows over consecutive windows of cfg.window_seconds.

    A trailing partial window is kept. Window values are the plain mean of the
    slot values in that window.
    '''

    per_window = max(1, int(round(cfg.window_seconds / cfg.ts_seconds)))
    window = frame['slot'].to_numpy() // per_window
    records = []

    for w, group in frame.groupby(window, sort=True):
        mean = group.mean(numeric_only=True)
        records.append(SimulationRecord(window=int(w),
                                        start_s=float(group['time_s'].min()),
                                        end_s=float(group['time_s'].max() + cfg.ts_seconds),
                                        slots=len(group),
                                        saved_npn=float(mean['saved_npn']),
                                        saved_fpn=float(mean['saved_fpn']),
                                        saved_spn=float(mean['saved_spn']),
                                        sat_npn=float(mean['sat_npn']),
                                        sat_fpn=float(mean['sat_fpn']),
                                        sat_spn_estimated=float(mean['sat_spn_estimated']),
                                        sat_spn_feedback=float(mean['sat_spn_feedback']),
                                        fpn_met=float(mean['fpn_met']),
                                        spn_met=float(mean['spn_met']),
                                        config_hash=config_hash,
                                        seed=seed))

    return records


def run_simulation(cfg, surrogate=None):

    '''
    Runs the policy simulation and returns one SimulationRecord per window.

    Re-optimises every time slot. With cfg.manage_surrogate the surrogate is
    corrected and fine-tuned from oracle feedback as the simulation runs.
    '''

    frame = simulate_slots(cfg, surrogate)
    records = aggregate_windows(frame, cfg, cfg.config_hash, cfg.seed)

    logger.info("Simulation complete: %d windows of %.0f s", len(records), cfg.window_seconds)

    return records
