import json
import os

import numpy as np
import pandas as pd
import pytest
import yaml

from conftest import TINY_RATES_KBPS
from opa.errors import ConfigError, HarnessError
from opa.harness import cli
from opa.harness.experiments import (ExperimentConfig, greedy_max_rate, make_instance, run_compare, run_optimize,
                                     run_scalability, run_surrogate_impact, split_dataset)
from opa.harness.export import (ResultBundle, export_results, load_results, optimize_bundle, simulation_bundle)
from opa.harness.simulation import PolicySimulator, aggregate_windows, run_simulation, simulate_slots
from opa.netmodel import NetworkConfig
from opa.satisfaction import ZoneOfToleranceOracle, generate_dataset, working_professional_persona
from opa.stats import INSUFFICIENT_DATA
from opa.surrogate import OffsetSurrogate, SurrogateSpec


def small_config(small_params, experiment='compare', **changes):

    return ExperimentConfig.from_params(small_params, experiment).replace(**changes)


def demo_bundle():

    return ResultBundle(name='demo', config_hash='abc', seeds={'seed': 3},
                        tables={'t': pd.DataFrame({'x': [1, 2], 'y': [0.5, np.nan]})},
                        series={'s': pd.DataFrame({'x': [1.0, 2.0, 3.0], 'y': [4.0, 5.0, 6.0], 'z': [0, 0, 0]})})


def test_config_from_defaults(params):

    cfg = ExperimentConfig.from_params(params)

    assert cfg.algorithms == ('nsga2', 'nsga3', 'spea2', 'emoea')
    assert cfg.nfe == 1000
    assert cfg.population_size == 100
    assert cfg.network.num_rbs == 100


def test_paper_scale_and_seed(params):

    cfg = ExperimentConfig.from_params(params, paper_scale=True, seed=5)

    assert cfg.nfe == 5000
    assert cfg.simulation_minutes == 50.0
    assert cfg.seed == 5
    assert cfg.config_hash != ExperimentConfig.from_params(params).config_hash


@pytest.mark.parametrize('changes', [{'experiment': 'bogus'}, {'runs_per_instance': 0}, {'sat_source': 'crowd'},
                                     {'algorithms': ('moead',)}, {'modes': ()}, {'modes': ('xpn',)}, {'nfe': 5},
                                     {'window_seconds': 0.5}])
def test_config_validation(small_params, changes):

    with pytest.raises(ConfigError):
        small_config(small_params, **changes)


def test_config_rejects_bad_types(params):

    params['experiment']['nfe'] = 'many'

    with pytest.raises(ConfigError, match='Invalid experiment parameter'):
        ExperimentConfig.from_params(params)


def test_greedy_with_ample_demand():

    bits = greedy_max_rate(TINY_RATES_KBPS, [1e6, 1e6])

    assert bits.tolist() == [[1, 1, 1, 0], [0, 0, 0, 1]]
    assert (bits * TINY_RATES_KBPS).sum() == pytest.approx(1650.0)


def test_greedy_stops_serving_met_users():

    bits = greedy_max_rate(TINY_RATES_KBPS, [900, 800])

    assert bits.tolist() == [[1, 1, 0, 0], [0, 0, 1, 1]]
    assert (bits * TINY_RATES_KBPS).sum() == pytest.approx(1600.0)


def test_greedy_result_is_repaired():

    bits = greedy_max_rate(TINY_RATES_KBPS, [600, 800])

    # u0 overshoots with 500 + 400, the 400 block is dropped
    assert bits.tolist() == [[1, 0, 0, 0], [0, 0, 1, 1]]


def test_greedy_edge_cases():

    assert greedy_max_rate([[1.0, 2.0, 3.0]], [1e9]).tolist() == [[1, 1, 1]]
    assert greedy_max_rate(TINY_RATES_KBPS, [0, 0]).sum() == 0


def test_instances_are_seeded(small_params):

    cfg = small_config(small_params)
    a, b, c = make_instance(cfg, 0), make_instance(cfg, 0), make_instance(cfg, 1)

    assert a.contexts == b.contexts
    assert np.array_equal(a.channel.gains, b.channel.gains)
    assert a.seed != c.seed
    assert len(make_instance(cfg, 0, num_users=3).contexts) == 3


def test_compare(small_params):

    report = run_compare(small_config(small_params))

    assert report.flags == []
    assert report.summary.shape == (10, 5)
    assert set(report.friedman) == {'hv', 'gd', 'igd', 'sp', 'ngr'}
    assert set(report.api) == {'nsga2', 'emoea'}
    assert set(report.series) == {'sem_runs_nsga2', 'sem_runs_emoea', 'sem_instances_nsga2', 'sem_instances_emoea',
                                  'ranked_nsga2', 'ranked_emoea', 'merged_rank', 'reference_front', 'operating_point'}
    assert report.series['sem_instances_emoea'].columns.tolist() == ['n', 'sem']
    assert (report.series['sem_runs_nsga2']['sem'].diff().dropna() <= 0.0).all()
    assert report.values['value'].between(0.0, np.inf).all()


def test_compare_is_reproducible(small_params):

    cfg = small_config(small_params)

    pd.testing.assert_frame_equal(run_compare(cfg).values, run_compare(cfg).values)


def test_compare_single_instance_is_flagged(small_params):

    report = run_compare(small_config(small_params, instances=1, runs_per_instance=1, reference_runs=1))

    assert report.flags == [INSUFFICIENT_DATA]
    assert report.friedman == {}
    assert report.posthoc.empty


def test_compare_needs_a_surrogate(small_params):

    with pytest.raises(HarnessError, match='no trained surrogate'):
        run_compare(small_config(small_params, sat_source='surrogate'))


def test_optimize(small_params):

    result = run_optimize(small_config(small_params, 'optimize'))
    bundle = optimize_bundle(small_config(small_params, 'optimize'), result)

    assert len(result.front) > 0
    assert result.operating_point.point in result.front.points()
    assert result.front.nfe == 40
    assert bundle.tables['users']['user_id'].tolist() == [0, 1]
    assert bundle.meta['target_met'] == result.target_met


def test_simulation_needs_surrogate_for_spn(small_params):

    with pytest.raises(HarnessError):
        PolicySimulator(small_config(small_params, 'simulate'))


def test_simulation_windows(small_params):

    cfg = small_config(small_params, 'simulate')
    records = run_simulation(cfg, OffsetSurrogate(ZoneOfToleranceOracle(), 1))
    frame = pd.DataFrame([r.as_dict() for r in records])

    assert len(records) == 3
    assert frame['slots'].tolist() == [5, 5, 5]
    assert frame['end_s'].tolist() == [5.0, 10.0, 15.0]
    assert (frame['saved_npn'] == 0.0).all()
    assert (frame['config_hash'] == cfg.config_hash).all()

    # An optimistic surrogate overstates what the users report
    assert (frame['sat_spn_feedback'] <= frame['sat_spn_estimated'] + 1e-12).all()
    assert (frame['sat_spn_feedback'] < frame['sat_spn_estimated']).any()


def test_fpn_slots_meet_the_target(small_params):

    cfg = small_config(small_params, 'simulate', modes=('npn', 'fpn'))
    slots = simulate_slots(cfg)
    met = slots[slots['fpn_met'] == 1.0]

    assert (met['sat_fpn'] >= 4.0).all()
    assert slots['sat_spn_estimated'].isna().all()


def test_windows_are_slot_means(small_params):

    cfg = small_config(small_params, 'simulate', modes=('npn', 'fpn'))
    slots = simulate_slots(cfg)
    records = aggregate_windows(slots, cfg)

    assert records[0].saved_fpn == pytest.approx(slots['saved_fpn'][:5].mean())
    assert records[2].sat_npn == pytest.approx(slots['sat_npn'][10:].mean())
    assert np.isnan(records[1].sat_spn_feedback)


def test_simulation_plotdata(small_params, tmp_path):

    cfg = small_config(small_params, 'simulate', modes=('npn', 'fpn'), simulation_minutes=25 / 60.0)
    bundle = simulation_bundle(cfg, run_simulation(cfg))
    paths = export_results(bundle, 'plotdata', str(tmp_path))

    assert set(bundle.series) == {'saved_fpn', 'sat_npn', 'sat_fpn'}
    assert len(bundle.tables['windows']) == 5
    assert all(len(pd.read_csv(p)) == 5 for p in paths)

    with pytest.raises(HarnessError):
        simulation_bundle(cfg, [])


def test_scalability(small_params):

    users, nfe = run_scalability(small_config(small_params, 'scalability'))

    assert users.columns.tolist() == ['algorithm', 'users', 'mean_hv', 'median_hv']
    assert nfe.columns.tolist() == ['algorithm', 'nfe', 'mean_hv', 'median_hv']
    assert users['algorithm'].tolist() == ['nsga2', 'emoea']
    assert nfe['nfe'].tolist() == [40, 40]
    assert users['mean_hv'].between(0.0, 1.0).all()


def test_surrogate_impact_with_a_perfect_model(small_params, samples):

    cfg = small_config(small_params, 'surrogate_impact', include_oracle=True)
    table = run_surrogate_impact(cfg, samples, trainer=lambda spec, data: ZoneOfToleranceOracle())

    assert table.columns.tolist() == ['model', 'training_fraction', 'accuracy', 'hv_nsga2', 'hv_emoea']
    assert table['model'].tolist() == ['surrogate', 'oracle']
    assert table['accuracy'].tolist() == [1.0, 1.0]
    assert table.loc[0, 'hv_nsga2'] == pytest.approx(table.loc[1, 'hv_nsga2'])


def test_split_is_disjoint(samples):

    training, held_out = split_dataset(samples, 2021)

    assert len(training) == 1200
    assert len(held_out) == 300
    assert split_dataset(samples, 2021)[1] == held_out


def test_export_csv(tmp_path):

    paths = export_results(demo_bundle(), 'csv', str(tmp_path))
    frame = pd.read_csv(paths[0])

    assert os.path.basename(paths[0]) == 'demo_t.csv'
    assert frame.columns.tolist() == ['config_hash', 'seed', 'x', 'y']
    assert frame['seed'].tolist() == [3, 3]


def test_export_json_reloads(tmp_path):

    path = export_results(demo_bundle(), 'json', str(tmp_path))[0]
    bundle = load_results(path)

    with open(path) as f:
        assert json.load(f)['tables']['t'][1]['y'] is None

    assert bundle.config_hash == 'abc'
    assert bundle.seeds == {'seed': 3}
    assert bundle.tables['t']['x'].tolist() == [1, 2]
    assert bundle.tables['t']['y'].isna().tolist() == [False, True]
    assert bundle.series['s']['y'].tolist() == [4.0, 5.0, 6.0]


def test_export_plotdata(tmp_path):

    path = export_results(demo_bundle(), 'plotdata', str(tmp_path))[0]
    frame = pd.read_csv(path)

    assert os.path.basename(path) == 'demo_plot_s.csv'
    assert frame.shape == (3, 2)


def test_export_errors(tmp_path):

    blocker = tmp_path / 'file.txt'
    blocker.write_text('')

    with pytest.raises(HarnessError, match='Cannot create'):
        export_results(demo_bundle(), 'csv', str(blocker / 'out'))

    with pytest.raises(HarnessError, match='Unknown export format'):
        export_results(demo_bundle(), 'xlsx', str(tmp_path))

    with pytest.raises(HarnessError, match='Nothing to export'):
        export_results(ResultBundle('empty', 'abc', {}), 'csv', str(tmp_path))

    with pytest.raises(HarnessError):
        load_results(str(tmp_path / 'missing.json'))


def test_cli_gen_data(tmp_path):

    assert cli.main(['--out', str(tmp_path), 'gen-data', '--slots', '20']) == 0
    assert len(pd.read_csv(tmp_path / cli.DATASET_FILE)) == 20


def test_cli_missing_config(tmp_path):

    assert cli.main(['--config', str(tmp_path / 'missing.yaml'), 'compare']) == 1


def test_cli_missing_surrogate(tmp_path):

    assert cli.main(['--out', str(tmp_path), 'optimize']) == 2


def test_cli_optimize_and_export(small_params, tmp_path):

    config = tmp_path / 'small.yaml'
    config.write_text(yaml.safe_dump(small_params))
    out = tmp_path / 'results'

    assert cli.main(['--config', str(config), '--out', str(out), 'optimize', '--sat-source', 'oracle']) == 0
    assert (out / 'optimize.json').exists()
    assert (out / 'optimize_front.csv').exists()
    assert (out / 'optimize_users.csv').exists()
    assert (out / 'optimize_plot_operating_point.csv').exists()

    replot = tmp_path / 'replot'

    assert cli.main(['--out', str(replot), 'export', str(out / 'optimize.json'), '--format', 'plotdata']) == 0
    assert sorted(os.listdir(replot)) == ['optimize_plot_front.csv', 'optimize_plot_operating_point.csv']


@pytest.mark.slow
def test_more_training_data_gives_better_fronts(small_params):

    data = generate_dataset(working_professional_persona(), 12500, ts_seconds=20.0)
    cfg = small_config(small_params, 'surrogate_impact', training_fractions=(0.01, 1.0), nfe=400, runs_per_instance=5,
                       reference_runs=5)
    table = run_surrogate_impact(cfg, data, spec=SurrogateSpec(hidden_layers=(32, 16), epochs=10)).set_index('training_fraction')

    for a in cfg.algorithms:
        assert table.loc[1.0, 'hv_' + a] >= table.loc[0.01, 'hv_' + a]


@pytest.mark.slow
def test_scalability_trends(small_params):

    cfg = small_config(small_params, 'scalability', network=NetworkConfig(num_rbs=40, num_users=2), user_grid=(2, 8),
                       nfe_grid=(500, 5000), scale_users=4, scale_nfe=500, runs_per_instance=5)
    users, nfe = run_scalability(cfg)
    users = users.set_index(['algorithm', 'users'])['median_hv']
    nfe = nfe.set_index(['algorithm', 'nfe'])['median_hv']

    for a in cfg.algorithms:
        assert users[(a, 2)] >= users[(a, 8)]
        assert nfe[(a, 5000)] >= nfe[(a, 500)]


@pytest.mark.slow
def test_optimistic_surrogate_saves_more_than_the_oracle(small_params):

    cfg = small_config(small_params, 'simulate', modes=('npn', 'fpn', 'spn'), simulation_minutes=1.0, window_seconds=10,
                       nfe=200)
    frame = pd.DataFrame([r.as_dict() for r in run_simulation(cfg, OffsetSurrogate(ZoneOfToleranceOracle(), 1))])

    assert len(frame) == 6
    assert (frame['saved_spn'] >= frame['saved_fpn']).mean() >= 0.5
