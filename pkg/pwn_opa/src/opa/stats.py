'''
Nonparametric comparison of algorithms over instances. Ranks ascend with the
raw metric value for every metric.
'''
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats as st

logger = logging.getLogger(__name__)

METRICS = ('hv', 'gd', 'igd', 'sp', 'ngr')
POSTHOC_TESTS = ('conover', 'nemenyi', 'wilcoxon', 'mann_whitney')
SEM_GRID = tuple(range(5, 105, 5))
INSUFFICIENT_DATA = 'insufficient data'


def _matrix(samples):

    values = np.asarray(samples, dtype=float)

    if values.ndim != 2:
        raise ValueError("Expected an instances x algorithms matrix.")

    return values


def friedman_ranks(samples):

    ''' Per-instance ranks, ties averaged. '''

    return st.rankdata(_matrix(samples), axis=1)


def friedman(samples):

    ''' Friedman test on an instances x algorithms matrix: (statistic, p_value, avg_ranks). '''

    values = _matrix(samples)
    n, k = values.shape

    if n < 2 or k < 2:
        raise ValueError("Friedman needs at least two instances and two algorithms.")

    avg = friedman_ranks(values).mean(axis=0)
    statistic = 12.0 * n / (k * (k + 1)) * ((avg - (k + 1) / 2.0) ** 2).sum()

    return float(statistic), float(st.chi2.sf(statistic, k - 1)), avg


def sign_test(a, b):

    ''' Exact two-sided binomial sign test on paired samples; ties are dropped. '''

    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    wins = int((diff > 0).sum())
    trials = int((diff != 0).sum())

    if trials == 0:
        return 1.0

    return float(st.binomtest(wins, trials, 0.5).pvalue)


def _wilcoxon(x, y):

    if np.all(x - y == 0):
        return 1.0

    return float(st.wilcoxon(x, y).pvalue)


def _mann_whitney(x, y):

    if np.all(np.concatenate([x, y]) == x[0]):
        return 1.0

    return float(st.mannwhitneyu(x, y, alternative='two-sided').pvalue)


def _nemenyi(avg, n, k, i, j):

    se = np.sqrt(k * (k + 1) / (6.0 * n))
    q = abs(avg[i] - avg[j]) / se

    return float(st.studentized_range.sf(q * np.sqrt(2.0), k, np.inf))


def _conover(ranks, i, j):

    n, k = ranks.shape
    totals = ranks.sum(axis=0)
    spread = 2.0 * (n * (ranks ** 2).sum() - (totals ** 2).sum()) / ((n - 1) * (k - 1))
    diff = abs(totals[i] - totals[j])

    if spread <= 0.0:
        return 0.0 if diff > 0.0 else 1.0

    return float(2.0 * st.t.sf(diff / np.sqrt(spread), (n - 1) * (k - 1)))


def posthoc(samples, test, alpha=0.05, names=None):

    ''' Pairwise posthoc p-values between the columns, one row per pair. '''

    if test not in POSTHOC_TESTS:
        raise ValueError("Unknown posthoc test '{}', expected one of {}.".format(test, ', '.join(POSTHOC_TESTS)))

    values = _matrix(samples)
    n, k = values.shape
    names = list(range(k)) if names is None else list(names)
    ranks = friedman_ranks(values)
    avg = ranks.mean(axis=0)
    rows = []

    for i, j in itertools.combinations(range(k), 2):
        if test == 'wilcoxon':
            p = _wilcoxon(values[:, i], values[:, j])

        elif test == 'mann_whitney':
            p = _mann_whitney(values[:, i], values[:, j])

        elif test == 'nemenyi':
            p = _nemenyi(avg, n, k, i, j)

        else:
            p = _conover(ranks, i, j)

        p = min(max(p, 0.0), 1.0)
        rows.append((names[i], names[j], test, p, p < alpha))

    return pd.DataFrame(rows, columns=['a', 'b', 'test', 'p_value', 'reject'])


def standard_error(sigma, n):

    return sigma / np.sqrt(n)


def _sigma(samples):

    values = np.asarray(list(samples), dtype=float)

    if values.size == 0 or not np.all(np.isfinite(values)):
        raise ValueError("Samples must be non-empty and finite.")

    return float(values.std(ddof=1)) if values.size > 1 else 0.0


def sem_curve(samples, grid=SEM_GRID):

    sigma = _sigma(samples)

    return pd.DataFrame({'n': list(grid), 'sem': [standard_error(sigma, n) for n in grid]})


def sample_size_by_sem(stream_of_samples, threshold=0.05, grid=SEM_GRID):

    '''
    Smallest grid sample size whose standard error of the mean falls below threshold.

    The samples should already be normalised to [0, 1]. When no grid size
    qualifies the largest is returned.
    '''

    sigma = _sigma(stream_of_samples)

    for n in grid:
        if standard_error(sigma, n) < threshold:
            return n

    logger.warning("No sample size reaches SE_M < %.3f (sigma %.4f), using %d", threshold, sigma, grid[-1])

    return grid[-1]


def metric_phases(ngr_mean):

    ''' Phase angle per metric; beta = 1 when the mean NGR does not exceed 1. '''

    beta = 1 if ngr_mean <= 1.0 else 0

    return {'hv': 0.0, 'sp': 0.0, 'gd': np.pi, 'igd': np.pi, 'ngr': (1 - beta) * np.pi}, beta


def api_score(ranks, ngr_mean, weights=0.2):

    ''' Sum over metrics of |w| cos(theta) times the algorithm's average rank. '''

    phases, _ = metric_phases(ngr_mean)
    total = 0.0

    for metric in METRICS:
        w = weights[metric] if isinstance(weights, dict) else weights
        total += abs(w) * np.cos(phases[metric]) * ranks[metric]

    return float(total)


@dataclass
class StatReport:

    summary: pd.DataFrame
    friedman: dict
    ranks: pd.DataFrame
    posthoc: pd.DataFrame
    api: dict
    beta: dict
    phases: dict
    weights: float = 0.2
    alpha: float = 0.05
    flags: list = field(default_factory=list)
    rank_orientation: str = 'ascending: higher metric value, higher rank'
    values: pd.DataFrame = None
    series: dict = field(default_factory=dict)

    def as_table(self):

        table = self.summary.copy()
        table['rank'] = [self.ranks.loc[m, a] if m in self.ranks.index else np.nan
                         for m, a in zip(table['metric'], table['algorithm'])]
        table['p_value'] = [self.friedman.get(m, {}).get('p_value', np.nan) for m in table['metric']]
        table['api'] = [self.api.get(a, np.nan) for a in table['algorithm']]

        return table[['metric', 'algorithm', 'rank', 'mean', 'max', 'min', 'p_value', 'api']]

    def to_dict(self):

        return {'summary': self.summary.to_dict('records'),
                'friedman': self.friedman,
                'ranks': self.ranks.reset_index().rename(columns={'index': 'metric'}).to_dict('records'),
                'posthoc': self.posthoc.to_dict('records'),
                'api': self.api,
                'beta': self.beta,
                'phases': self.phases,
                'weights': self.weights,
                'alpha': self.alpha,
                'flags': self.flags,
                'rank_orientation': self.rank_orientation}


def build_stat_report(values, alpha=0.05, tests=POSTHOC_TESTS, weights=0.2):

    '''
    Runs the full comparison on a long table of instance, algorithm, metric, value.

    Posthoc tests only run for metrics where Friedman rejects at alpha.
    '''

    algorithms = list(dict.fromkeys(values['algorithm']))
    metrics = [m for m in METRICS if m in set(values['metric'])]

    summary = (values.groupby(['metric', 'algorithm'], sort=False)['value']
               .agg(['mean', 'max', 'min']).reset_index())
    summary['metric'] = pd.Categorical(summary['metric'], categories=metrics, ordered=True)
    summary['algorithm'] = pd.Categorical(summary['algorithm'], categories=algorithms, ordered=True)
    summary = summary.sort_values(['metric', 'algorithm']).reset_index(drop=True)
    summary['metric'] = summary['metric'].astype(str)
    summary['algorithm'] = summary['algorithm'].astype(str)

    results = {}
    ranks = pd.DataFrame(index=metrics, columns=algorithms, dtype=float)
    posthoc_tables = []
    flags = []
    instances = values['instance'].nunique()

    for metric in metrics:
        matrix = (values[values['metric'] == metric]
                  .pivot(index='instance', columns='algorithm', values='value')[algorithms])

        if instances < 2 or len(algorithms) < 2:
            ranks.loc[metric] = friedman_ranks(matrix.to_numpy()).mean(axis=0)
            continue

        statistic, p, avg = friedman(matrix.to_numpy())
        ranks.loc[metric] = avg
        results[metric] = {'statistic': statistic, 'p_value': p, 'reject': bool(p < alpha)}

        if p < alpha:
            for test in tests:
                table = posthoc(matrix.to_numpy(), test, alpha, names=algorithms)
                table.insert(0, 'metric', metric)
                posthoc_tables.append(table)

    if instances < 2 or len(algorithms) < 2:
        flags.append(INSUFFICIENT_DATA)
        logger.warning("Friedman test skipped: %d instances, %d algorithms", instances, len(algorithms))

    posthoc_table = (pd.concat(posthoc_tables, ignore_index=True) if posthoc_tables
                     else pd.DataFrame(columns=['metric', 'a', 'b', 'test', 'p_value', 'reject']))

    api, beta, phases = {}, {}, {}
    ngr = summary[summary['metric'] == 'ngr'].set_index('algorithm')['mean'] if 'ngr' in metrics else None

    if set(METRICS) <= set(metrics):
        for algorithm in algorithms:
            ngr_mean = float(ngr[algorithm])
            api[algorithm] = api_score(ranks[algorithm].to_dict(), ngr_mean, weights)
            phases[algorithm], beta[algorithm] = metric_phases(ngr_mean)

    return StatReport(summary=summary, friedman=results, ranks=ranks, posthoc=posthoc_table, api=api, beta=beta,
                      phases=phases, weights=weights, alpha=alpha, flags=flags, values=values)
