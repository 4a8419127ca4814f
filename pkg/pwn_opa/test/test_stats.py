import itertools

import numpy as np
import pandas as pd
import pytest

from opa.stats import (INSUFFICIENT_DATA, METRICS, SEM_GRID, api_score, build_stat_report, friedman, friedman_ranks,
                       metric_phases, posthoc, sample_size_by_sem, sem_curve, sign_test, standard_error)

ORDERED = np.tile([1.0, 2.0, 3.0], (10, 1))


def long_table(value_fn, instances=10, algorithms=('a', 'b', 'c')):

    rows = [(i, alg, metric, value_fn(i, j, metric))
            for i in range(instances) for j, alg in enumerate(algorithms) for metric in METRICS]

    return pd.DataFrame(rows, columns=['instance', 'algorithm', 'metric', 'value'])


def test_friedman_on_ordered_matrix():

    statistic, p, avg = friedman(ORDERED)

    assert statistic == pytest.approx(20.0)
    assert p == pytest.approx(np.exp(-10.0), rel=1e-6)
    assert avg.tolist() == [1.0, 2.0, 3.0]


def test_friedman_identical_columns():

    statistic, p, avg = friedman(np.ones((6, 3)))

    assert statistic == pytest.approx(0.0)
    assert p == pytest.approx(1.0)
    assert avg.tolist() == [2.0, 2.0, 2.0]


def test_friedman_needs_two_by_two():

    with pytest.raises(ValueError):
        friedman(np.ones((1, 3)))

    with pytest.raises(ValueError):
        friedman(np.ones(5))


def test_friedman_matches_permutation_distribution():

    rng = np.random.default_rng(8)
    values = rng.normal(size=(20, 3)) + np.array([0.0, 0.3, 0.6])
    statistic, p_value, _ = friedman(values)
    rank_sums = friedman_ranks(values).sum(axis=0)

    assert statistic == pytest.approx(12.0 / (20 * 3 * 4) * (rank_sums ** 2).sum() - 3 * 20 * 4)

    # Ranks are exchangeable within an instance under the null
    permuted = np.array([friedman(rng.permuted(values, axis=1))[0] for _ in range(4000)])

    assert p_value == pytest.approx(np.mean(permuted >= statistic - 1e-9), abs=0.03)


def test_ranks_average_ties():

    assert friedman_ranks([[1.0, 1.0, 3.0]]).tolist() == [[1.5, 1.5, 3.0]]


@pytest.mark.parametrize('wins', range(11))
def test_two_algorithm_friedman_agrees_with_sign_test(wins):

    a = np.where(np.arange(10) < wins, 2.0, 0.0)
    b = np.ones(10)
    statistic, p, _ = friedman(np.column_stack([a, b]))

    assert statistic == pytest.approx((2 * wins - 10) ** 2 / 10.0)
    assert (p < 0.05) == (sign_test(a, b) < 0.05)


def test_sign_test_all_ties():

    assert sign_test([1, 2, 3], [1, 2, 3]) == 1.0


def test_nemenyi_on_ordered_matrix():

    table = posthoc(ORDERED, 'nemenyi', names=['A', 'B', 'C']).set_index(['a', 'b'])

    assert table.loc[('A', 'C'), 'reject']
    assert not table.loc[('A', 'B'), 'reject']
    assert not table.loc[('B', 'C'), 'reject']


def test_conover_degenerate_spread():

    ordered = posthoc(ORDERED, 'conover')
    same = posthoc(np.ones((10, 3)), 'conover')

    assert ordered['p_value'].tolist() == [0.0, 0.0, 0.0]
    assert same['p_value'].tolist() == [1.0, 1.0, 1.0]


def test_wilcoxon_matches_enumeration():

    x = np.array([11, 8, 13, 14, 5, 16, 17, 18], dtype=float)
    y = np.full(8, 10.0)

    # Signed ranks 1, -2, 3, 4, -5, 6, 7, 8 so the smaller rank sum is 7
    sums = [sum(r for r, keep in zip(range(1, 9), mask) if keep) for mask in itertools.product([0, 1], repeat=8)]
    expected = min(1.0, 2.0 * sum(s <= 7 for s in sums) / len(sums))

    p = posthoc(np.column_stack([x, y]), 'wilcoxon')['p_value'][0]

    assert p == pytest.approx(expected, rel=1e-9)


def test_mann_whitney_matches_enumeration():

    x = np.array([1.1, 2.3, 3.2, 4.5])
    y = np.array([5.1, 6.2, 7.3, 0.5])

    # Ranks of x within the pooled sample are 2, 3, 4, 5 so U = 14 - 10 = 4
    us = [sum(c) - 10 for c in itertools.combinations(range(1, 9), 4)]
    expected = min(1.0, 2.0 * sum(u <= 4 for u in us) / len(us))

    p = posthoc(np.column_stack([x, y]), 'mann_whitney')['p_value'][0]

    assert p == pytest.approx(expected, rel=1e-9)


def test_rank_tests_on_identical_columns():

    same = np.ones((8, 2))

    assert posthoc(same, 'wilcoxon')['p_value'][0] == 1.0
    assert posthoc(same, 'mann_whitney')['p_value'][0] == 1.0


def test_unknown_posthoc():

    with pytest.raises(ValueError, match='Unknown posthoc test'):
        posthoc(ORDERED, 'tukey')


def test_sample_size_by_standard_error():

    samples = np.linspace(0.0, 1.0, 1001)

    assert sample_size_by_sem(samples) == 35
    assert sample_size_by_sem(samples * 0.9) == 30
    assert sample_size_by_sem([0.5, 0.5]) == SEM_GRID[0]


def test_sample_size_falls_back_to_largest():

    assert sample_size_by_sem([0.0, 10.0]) == SEM_GRID[-1]

    with pytest.raises(ValueError):
        sample_size_by_sem([])

    with pytest.raises(ValueError):
        sample_size_by_sem([0.1, np.nan])


def test_sem_curve_is_decreasing():

    curve = sem_curve(np.linspace(0.0, 1.0, 101))

    assert curve['n'].tolist() == list(SEM_GRID)
    assert curve['sem'].is_monotonic_decreasing
    assert standard_error(2.0, 4) == 1.0


def test_api_switches_with_ngr():

    ranks = {m: 2.0 for m in METRICS}

    assert api_score(ranks, ngr_mean=1.0) == pytest.approx(0.4)
    assert api_score(ranks, ngr_mean=2.0) == pytest.approx(-0.4)
    assert metric_phases(1.0)[1] == 1
    assert metric_phases(1.5)[1] == 0


def test_api_is_linear_in_ranks():

    a = {'hv': 1.0, 'gd': 3.0, 'igd': 2.0, 'sp': 1.5, 'ngr': 2.5}
    b = {'hv': 2.0, 'gd': 1.0, 'igd': 3.0, 'sp': 2.5, 'ngr': 1.0}
    both = {m: a[m] + b[m] for m in METRICS}

    assert api_score(both, 0.5) == pytest.approx(api_score(a, 0.5) + api_score(b, 0.5))
    assert api_score(a, 0.5, weights={m: 0.4 for m in METRICS}) == pytest.approx(2 * api_score(a, 0.5))


def test_report_on_ordered_algorithms():

    values = long_table(lambda i, j, metric: 0.1 * (j + 1) + 0.001 * i)
    report = build_stat_report(values)

    assert report.flags == []
    assert report.summary.shape == (15, 5)
    assert report.summary['metric'].tolist()[:3] == ['hv', 'hv', 'hv']
    assert report.ranks.loc['hv'].tolist() == [1.0, 2.0, 3.0]
    assert all(report.friedman[m]['reject'] for m in METRICS)
    assert len(report.posthoc) == len(METRICS) * 4 * 3
    assert report.api == pytest.approx({'a': 0.2, 'b': 0.4, 'c': 0.6})
    assert report.beta == {'a': 1, 'b': 1, 'c': 1}
    assert report.as_table().columns.tolist() == ['metric', 'algorithm', 'rank', 'mean', 'max', 'min', 'p_value',
                                                  'api']


def test_report_identical_algorithms():

    report = build_stat_report(long_table(lambda i, j, metric: 0.5))

    assert all(report.friedman[m]['p_value'] == pytest.approx(1.0) for m in METRICS)
    assert report.posthoc.empty
    assert report.ranks.loc['gd'].tolist() == [2.0, 2.0, 2.0]


def test_report_flags_single_instance():

    report = build_stat_report(long_table(lambda i, j, metric: float(j), instances=1))

    assert report.flags == [INSUFFICIENT_DATA]
    assert report.friedman == {}
    assert report.posthoc.empty
    assert report.ranks.loc['hv'].tolist() == [1.0, 2.0, 3.0]


def test_report_flags_single_algorithm():

    report = build_stat_report(long_table(lambda i, j, metric: 0.1 * i, algorithms=('a',)))

    assert report.flags == [INSUFFICIENT_DATA]
    assert report.friedman == {}


def test_report_serialises():

    report = build_stat_report(long_table(lambda i, j, metric: 0.1 * (j + 1) + 0.001 * i))
    data = report.to_dict()

    assert data['rank_orientation'].startswith('ascending')
    assert data['ranks'][0]['metric'] == 'hv'
    assert len(data['summary']) == 15
