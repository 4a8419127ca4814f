'''
Result persistence.

A ResultBundle carries the tables and plot series of one experiment together
with the configuration hash and seeds that produced them. It is written as

    csv      - one <name>_<table>.csv per table, config_hash and seed columns first
    json     - <name>.json holding everything, reloadable with load_results
    plotdata - one two-column <name>_plot_<series>.csv per plot series
'''
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from opa.errors import HarnessError
from opa.harness.simulation import records_frame

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'json', 'plotdata')


@dataclass
class ResultBundle:

    name: str
    config_hash: str
    seeds: dict
    tables: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _json_default(value):

    if isinstance(value, np.generic):
        return value.item()

    if isinstance(value, np.ndarray):
        return value.tolist()

    raise TypeError("Cannot serialise {}".format(type(value).__name__))


def _records(frame):

    # NaN is not valid JSON
    return frame.astype(object).where(pd.notna(frame), None).to_dict('records')


def _write(path, writer):

    try:
        writer(path)

    except OSError as e:
        raise HarnessError("Cannot write {}: {}".format(path, e)) from e

    logger.debug("Wrote %s", path)

    return path


def export_results(bundle, fmt, out_dir):

    '''
    Writes a bundle in one format.

    Returns the list of written paths.
    '''

    if fmt not in FORMATS:
        raise HarnessError("Unknown export format '{}', expected one of {}.".format(fmt, ', '.join(FORMATS)))

    if not bundle.tables and not bundle.series:
        raise HarnessError("Nothing to export for '{}'.".format(bundle.name))

    try:
        os.makedirs(out_dir, exist_ok=True)

    except OSError as e:
        raise HarnessError("Cannot create output directory {}: {}".format(out_dir, e)) from e

    paths = []

    if fmt == 'csv':
        for table_name, table in bundle.tables.items():
            frame = table.copy()
            frame.insert(0, 'config_hash', bundle.config_hash)
            frame.insert(1, 'seed', bundle.seeds.get('seed', 0))
            path = os.path.join(out_dir, '{}_{}.csv'.format(bundle.name, table_name))
            paths.append(_write(path, lambda p, f=frame: f.to_csv(p, index=False, lineterminator='\n')))

    elif fmt == 'json':
        document = {'name': bundle.name,
                    'config_hash': bundle.config_hash,
                    'seeds': bundle.seeds,
                    'meta': bundle.meta,
                    'tables': dict((k, _records(v)) for k, v in bundle.tables.items()),
                    'series': dict((k, _records(v)) for k, v in bundle.series.items())}
        text = json.dumps(document, indent=2, sort_keys=True, default=_json_default)

        def dump(p):
            with open(p, 'w') as f:
                f.write(text)

        paths.append(_write(os.path.join(out_dir, bundle.name + '.json'), dump))

    else:
        for series_name, series in bundle.series.items():
            frame = series.iloc[:, :2]
            path = os.path.join(out_dir, '{}_plot_{}.csv'.format(bundle.name, series_name))
            paths.append(_write(path, lambda p, f=frame: f.to_csv(p, index=False, lineterminator='\n')))

    logger.info("Exported %s as %s: %d files", bundle.name, fmt, len(paths))

    return paths


def load_results(path):

    ''' Reads a bundle written in the json format. '''

    try:
        with open(path, 'r') as f:
            document = json.load(f)

    except (OSError, ValueError) as e:
        raise HarnessError("Cannot read results {}: {}".format(path, e)) from e

    def frame(records):
        return pd.DataFrame(records) if records else pd.DataFrame()

    return ResultBundle(name=document['name'],
                        config_hash=document['config_hash'],
                        seeds=document['seeds'],
                        tables=dict((k, frame(v)) for k, v in document['tables'].items()),
                        series=dict((k, frame(v)) for k, v in document['series'].items()),
                        meta=document.get('meta', {}))


def _seeds(cfg):

    return {'seed': cfg.seed}


def compare_bundle(cfg, report):

    ''' Bundle of a comparison: the ranked summary table, Friedman, posthoc and raw values. '''

    friedman = pd.DataFrame([dict(metric=m, **r) for m, r in report.friedman.items()],
                            columns=['metric', 'statistic', 'p_value', 'reject'])

    return ResultBundle(name='compare',
                        config_hash=cfg.config_hash,
                        seeds=_seeds(cfg),
                        tables={'summary': report.as_table(),
                                'friedman': friedman,
                                'posthoc': report.posthoc,
                                'values': report.values},
                        series=dict(report.series),
                        meta={'flags': report.flags, 'alpha': report.alpha, 'weights': report.weights,
                              'beta': report.beta, 'rank_orientation': report.rank_orientation,
                              'algorithms': list(cfg.algorithms)})


def simulation_bundle(cfg, records):

    if not records:
        raise HarnessError("Simulation produced no records.")

    frame = records_frame(records).drop(columns=['config_hash', 'seed'])
    x = frame['end_s']
    series = {}

    for column in ('saved_fpn', 'saved_spn', 'sat_npn', 'sat_fpn', 'sat_spn_estimated', 'sat_spn_feedback'):
        if frame[column].notna().any():
            series[column] = pd.DataFrame({'time_s': x, column: frame[column]})

    return ResultBundle(name='simulate', config_hash=cfg.config_hash, seeds=_seeds(cfg), tables={'windows': frame},
                        series=series, meta={'modes': list(cfg.modes), 'algorithm': cfg.sim_algorithm,
                                             'manage_surrogate': cfg.manage_surrogate})


def surrogate_impact_bundle(cfg, table):

    surrogates = table[table['model'] == 'surrogate']
    series = dict(('hv_' + a, surrogates[['training_fraction', 'hv_' + a]].reset_index(drop=True))
                  for a in cfg.algorithms)
    series['accuracy'] = surrogates[['training_fraction', 'accuracy']].reset_index(drop=True)

    return ResultBundle(name='surrogate_impact', config_hash=cfg.config_hash, seeds=_seeds(cfg),
                        tables={'hv': table}, series=series)


def scalability_bundle(cfg, users_table, nfe_table):

    series = {}

    for a in cfg.algorithms:
        series['users_' + a] = users_table[users_table['algorithm'] == a][['users', 'mean_hv']].reset_index(drop=True)
        series['nfe_' + a] = nfe_table[nfe_table['algorithm'] == a][['nfe', 'mean_hv']].reset_index(drop=True)

    return ResultBundle(name='scalability', config_hash=cfg.config_hash, seeds=_seeds(cfg),
                        tables={'users': users_table, 'nfe': nfe_table}, series=series)


def optimize_bundle(cfg, result):

    front = pd.DataFrame([(m.objectives.f1, m.objectives.f2, m.objectives.violation) for m in result.front],
                         columns=['f1', 'f2', 'violation'])
    point = result.operating_point.objectives
    users = pd.DataFrame([(c.user_id, c.location_name, c.application, c.service, c.demand_rate, c.max_delta)
                          for c in result.instance.contexts],
                         columns=['user_id', 'location', 'application', 'service', 'demand_rate', 'max_delta'])

    return ResultBundle(name='optimize', config_hash=cfg.config_hash,
                        seeds={'seed': cfg.seed, 'instance': result.instance.seed},
                        tables={'front': front, 'users': users},
                        series={'front': front[['f1', 'f2']],
                                'operating_point': pd.DataFrame([(point.f1, point.f2)], columns=['f1', 'f2'])},
                        meta={'target_met': result.target_met, 'algorithm': result.front.algorithm,
                              'nfe': result.front.nfe})
