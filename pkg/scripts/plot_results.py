#!/usr/bin/env python3
'''
Renders the plot-data series exported by "opa <experiment>" or
"opa export --format plotdata" into one PNG per experiment.

    python3 scripts/plot_results.py results/ [--show]
'''
import argparse
import glob
import os
from collections import defaultdict

import pandas as pd
from matplotlib import pyplot as plt

# Series drawn as scatter instead of lines
POINT_SERIES = ('ranked_', 'reference_front', 'operating_point', 'front', 'merged_rank')


def collect(directory):

    groups = defaultdict(dict)

    for path in sorted(glob.glob(os.path.join(directory, '*_plot_*.csv'))):
        name, series = os.path.basename(path)[:-len('.csv')].split('_plot_', 1)
        groups[name][series] = pd.read_csv(path)

    return groups


def plot_experiment(name, series, directory):

    fig, ax = plt.subplots(figsize=(8, 5))

    for label, frame in series.items():
        x, y = frame.columns[:2]

        if label.startswith(POINT_SERIES):
            ax.scatter(frame[x], frame[y], s=12, label=label)

        else:
            ax.plot(frame[x], frame[y], marker='o', markersize=3, label=label)

    first = next(iter(series.values()))
    ax.set_xlabel(first.columns[0])
    ax.set_ylabel(first.columns[1] if len(series) == 1 else 'value')
    ax.set_title(name)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize='small')
    fig.tight_layout()

    path = os.path.join(directory, name + '.png')
    fig.savefig(path, dpi=150)

    return fig, path


def main():

    parser = argparse.ArgumentParser(description='Plot exported opa series.')
    parser.add_argument('directory', help='Directory holding <experiment>_plot_<series>.csv files')
    parser.add_argument('--show', action='store_true', help='Open the figures after saving them')
    args = parser.parse_args()

    groups = collect(args.directory)

    if not groups:
        print("No plot data found in {}".format(args.directory))
        return

    for name, series in groups.items():
        _, path = plot_experiment(name, series, args.directory)
        print("Figure saved: {}".format(path))

    print("Total figures: {}".format(len(groups)))

    if args.show:
        plt.show()


if __name__ == "__main__":
    main()
