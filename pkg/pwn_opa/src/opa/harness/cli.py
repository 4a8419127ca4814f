'''
Command line interface.

    gen-data            generate a labelled persona dataset
    train               train (and optionally cross-validate) the surrogate
    optimize            one algorithm on one instance, front and operating point
    compare             algorithm comparison with the statistical report
    simulate            NPN/FPN/SPN time-slot simulation
    scale               HV against users and against the NFE budget
    surrogate-impact    HV against the amount of surrogate training data
    export              re-export a saved json bundle in another format

Exit codes: 0 success, 1 configuration error, 2 any other error.
'''
from __future__ import annotations

import argparse
import logging
import os
import sys

from opa.config import DEFAULT_CONFIG, apply_overrides, get_param, load_params
from opa.errors import ConfigError, HarnessError
from opa.harness import experiments, export
from opa.harness.simulation import run_simulation
from opa.satisfaction import generate_dataset, ingest_csv, persona_from_params, write_csv
from opa.surrogate import SurrogateSpec, cross_validate, load_surrogate, save_surrogate, train

logger = logging.getLogger(__name__)

DATASET_FILE = 'dataset.csv'
SURROGATE_FILE = 'surrogate.npz'


def build_parser():

    parser = argparse.ArgumentParser(prog='opa', description='Personalised resource-block allocation experiments.')
    parser.add_argument('--config', default=DEFAULT_CONFIG, help='YAML parameter file')
    parser.add_argument('--seed', type=int, default=None, help='Override the experiment seed')
    parser.add_argument('--out', default='results', help='Output directory')
    parser.add_argument('--paper-scale', action='store_true', help='Use the long-run experiment values from experiment.paper_scale')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='More logging (-vv for debug)')

    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen-data', help='Generate a labelled persona dataset')
    gen.add_argument('--slots', type=int, default=None, help='Time slots to generate (default from config)')
    gen.add_argument('--users', type=int, default=1)
    gen.add_argument('--output', default=None, help='CSV path (default <out>/dataset.csv)')

    trainer = commands.add_parser('train', help='Train the surrogate')
    trainer.add_argument('--data', default=None, help='Dataset CSV (default <out>/dataset.csv)')
    trainer.add_argument('--cv', action='store_true', help='Also run stratified cross-validation')
    trainer.add_argument('--output', default=None, help='Model path (default <out>/surrogate.npz)')

    for name in ('optimize', 'compare', 'simulate', 'scale', 'surrogate-impact'):
        command = commands.add_parser(name)
        command.add_argument('--surrogate', default=None, help='Trained model (default <out>/surrogate.npz)')
        command.add_argument('--sat-source', choices=experiments.SAT_SOURCES, default=None,
                             help='Satisfaction source of the optimiser')
        command.add_argument('--workers', type=int, default=None)

        if name == 'optimize':
            command.add_argument('--algorithm', default=None)
            command.add_argument('--instance', type=int, default=0)

        if name == 'simulate':
            command.add_argument('--modes', default=None, help='Comma-separated subset of npn,fpn,spn')
            command.add_argument('--manage-surrogate', action='store_true')

        if name == 'surrogate-impact':
            command.add_argument('--data', default=None, help='Dataset CSV (default <out>/dataset.csv)')

    exporter = commands.add_parser('export', help='Re-export a saved json bundle')
    exporter.add_argument('input', help='Bundle json written by an experiment')
    exporter.add_argument('--format', choices=export.FORMATS, default='csv')

    return parser


def configure_logging(verbosity):

    level = logging.WARNING if verbosity < 0 else (logging.INFO if verbosity == 0 else logging.DEBUG)
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def _overrides(args):

    section = {}

    if getattr(args, 'sat_source', None):
        section['sat_source'] = args.sat_source

    if getattr(args, 'workers', None):
        section['workers'] = args.workers

    if getattr(args, 'modes', None):
        section['modes'] = [m.strip() for m in args.modes.split(',') if m.strip()]

    if getattr(args, 'manage_surrogate', False):
        section['manage_surrogate'] = True

    return {'experiment': section} if section else {}


def _path(args, given, default_name):

    return given or os.path.join(args.out, default_name)


def _surrogate(args, cfg, required):

    if not required:
        return None

    path = _path(args, args.surrogate, SURROGATE_FILE)

    if not os.path.exists(path):
        raise HarnessError("No trained surrogate at {}. Run 'train' first or use --sat-source oracle.".format(path))

    return load_surrogate(path)


def _write(bundle, out_dir):

    for fmt in export.FORMATS:
        export.export_results(bundle, fmt, out_dir)

    print("Results written to {}".format(os.path.normpath(out_dir)))


def gen_data(args, params):

    persona = persona_from_params(params)
    slots = args.slots or int(get_param(params, '/persona/dataset_slots'))
    samples = generate_dataset(persona, slots, float(get_param(params, '/persona/dataset_ts_seconds')), args.users,
                               get_param(params, '/persona/start'), int(get_param(params, '/network/grid_size')))
    path = _path(args, args.output, DATASET_FILE)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    write_csv(samples, path)

    print("Total samples generated: {}".format(len(samples)))


def train_surrogate(args, params):

    samples = ingest_csv(_path(args, args.data, DATASET_FILE))
    spec = SurrogateSpec.from_params(params)

    if args.cv:
        report = cross_validate(spec, samples, int(get_param(params, '/surrogate/folds')))
        os.makedirs(args.out, exist_ok=True)
        report.as_frame().to_csv(os.path.join(args.out, 'cross_validation.csv'), index=False, lineterminator='\n')
        print("Cross-validation accuracy: {:.2f}% (std {:.2f}%)".format(report.mean * 100.0, report.std * 100.0))

    model = train(spec, samples)
    path = _path(args, args.output, SURROGATE_FILE)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_surrogate(model, path)

    print("Surrogate saved to {}".format(path))


def run_experiment(args, params):

    name = args.command.replace('-', '_')
    experiment = {'scale': 'scalability'}.get(name, name)
    cfg = experiments.ExperimentConfig.from_params(apply_overrides(params, _overrides(args)), experiment,
                                                   args.paper_scale, args.seed)

    if experiment == 'optimize':
        result = experiments.run_optimize(cfg, _surrogate(args, cfg, cfg.sat_source == 'surrogate'), args.algorithm,
                                          args.instance)
        bundle = export.optimize_bundle(cfg, result)

    elif experiment == 'compare':
        report = experiments.run_compare(cfg, _surrogate(args, cfg, cfg.sat_source == 'surrogate'))
        bundle = export.compare_bundle(cfg, report)

    elif experiment == 'simulate':
        records = run_simulation(cfg, _surrogate(args, cfg, 'spn' in cfg.modes))
        bundle = export.simulation_bundle(cfg, records)

    elif experiment == 'scalability':
        users, nfe = experiments.run_scalability(cfg, _surrogate(args, cfg, cfg.sat_source == 'surrogate'))
        bundle = export.scalability_bundle(cfg, users, nfe)

    else:
        samples = ingest_csv(_path(args, args.data, DATASET_FILE))
        bundle = export.surrogate_impact_bundle(cfg, experiments.run_surrogate_impact(cfg, samples))

    _write(bundle, args.out)


def reexport(args, params):

    bundle = export.load_results(args.input)
    paths = export.export_results(bundle, args.format, args.out)

    print("Files exported: {}".format(len(paths)))


COMMANDS = {'gen-data': gen_data, 'train': train_surrogate, 'export': reexport}


def main(argv=None):

    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        params = load_params(args.config)
        COMMANDS.get(args.command, run_experiment)(args, params)

    except ConfigError as e:
        logger.error("%s", e)
        return 1

    except KeyboardInterrupt:
        print("\nShutting down...")
        return 2

    except Exception as e:
        logger.error("%s", e, exc_info=args.verbose > 1)
        return 2

    return 0


if __name__ == "__main__":
    sys.exit(main())
