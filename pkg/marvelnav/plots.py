#!/usr/bin/env python
"""
Plotting functions, and CSV emitters for the data behind each figure.
"""

import numpy as np
import matplotlib
import matplotlib.pyplot as plt
import marvelnav.data_io as data_io


def plot_success_rates(results, **kwargs):
    """
    Grouped bar chart of each robot's on-time probability under each
    priority scenario, one group per (scenario, policy).

    Parameters
    ----------
    results: pandas DataFrame
        Output of results_tables.toy_battery.
    figsize: tuple, optional
        Size of figure in inches.
    include_team: bool, optional
        Whether to plot the team row as well.

    Returns
    -------
    fig: matplotlib figure
    """
    figsize = kwargs.pop('figsize', (6.4, 3))
    include_team = kwargs.pop('include_team', False)
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    table = results.reset_index()
    if not include_team:
        table = table[table['agent'] != 'team']
    groups = table[['scenario', 'policy']].drop_duplicates()
    agents = list(table['agent'].drop_duplicates())
    width = 0.8 / len(agents)
    fig, ax = plt.subplots(figsize=figsize)
    colors = matplotlib.rcParams['axes.prop_cycle'].by_key()['color']
    for na, agent in enumerate(agents):
        heights = []
        errors = []
        for _, group in groups.iterrows():
            row = table[(table['scenario'] == group['scenario']) &
                        (table['policy'] == group['policy']) &
                        (table['agent'] == agent)]
            heights.append(row['on_time_probability'].iloc[0])
            errors.append(row['std_error'].iloc[0])
        ax.bar(np.arange(len(groups)) + na * width, heights, width,
               yerr=errors, label='robot ' + str(agent),
               color=colors[na % len(colors)])
    ax.set_xticks(np.arange(len(groups)) + 0.4 - width / 2)
    ax.set_xticklabels(['scenario {0}\n{1}'.format(s, p) for s, p
                        in zip(groups['scenario'], groups['policy'])])
    ax.set_ylim(0, 1)
    ax.set_ylabel('on-time probability')
    ax.legend()
    return fig


def plot_budget_battery(results, **kwargs):
    """
    Team on-time probability against the budget multiplier, one line per
    policy.

    Parameters
    ----------
    results: pandas DataFrame
        Output of results_tables.budget_battery.
    figsize: tuple, optional

    Returns
    -------
    fig: matplotlib figure
    """
    figsize = kwargs.pop('figsize', (4, 3))
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    fig, ax = plt.subplots(figsize=figsize)
    for policy, group in results.reset_index().groupby('policy', sort=False):
        ax.errorbar(group['multiplier'], group['team_probability'],
                    yerr=group['std_error'], marker='o', capsize=2,
                    label=policy)
    ax.set_xlabel(r'budget / $t_\mathrm{LET}$')
    ax.set_ylabel('team on-time probability')
    ax.set_ylim(0, 1)
    ax.legend()
    return fig


def plot_training_log(log, **kwargs):
    """
    Training objective (raw and moving average) and expert agreement
    against epoch.

    Parameters
    ----------
    log: pandas DataFrame
        Output of trainer.train.
    window: int, optional
        Moving average window.
    figsize: tuple, optional

    Returns
    -------
    fig: matplotlib figure
    """
    window = kwargs.pop('window', 50)
    figsize = kwargs.pop('figsize', (6.4, 3))
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    fig, axes = plt.subplots(nrows=1, ncols=2, figsize=figsize)
    axes[0].plot(log['epoch'], log['objective'], alpha=0.3, label='raw')
    axes[0].plot(log['epoch'],
                 log['objective'].rolling(window, min_periods=1).mean(),
                 label='moving average')
    axes[0].set_xlabel('epoch')
    axes[0].set_ylabel('objective')
    axes[0].legend()
    axes[1].plot(log['epoch'], log['expert_agreement'].rolling(
        window, min_periods=1).mean())
    axes[1].set_xlabel('epoch')
    axes[1].set_ylabel('expert agreement')
    axes[1].set_ylim(0, 1)
    fig.tight_layout()
    return fig


def write_plot_data(results, path, manifest_hash):
    """Write the data behind a figure as a flat CSV."""
    data_io.write_csv(results.reset_index(), path, manifest_hash,
                      index=False)
