#!/usr/bin/env python
"""
Functions used to generate results tables: success rates on the
illustrative network, budget batteries over random OD pairs and the
ablation table.

Policies are passed as factories, callables mapping a ScenarioConfig to an
object with an act method, because trained policies depend on the
scenario they were trained on.
"""

import os
import warnings
import numpy as np
import pandas as pd
import networkx as nx
import nestcheck.io_utils as iou
import marvelnav.data_io as data_io
import marvelnav.evaluation as evaluation
import marvelnav.expert as expert
import marvelnav.graphs as graphs
import marvelnav.networks as networks
import marvelnav.policy as policy_net
import marvelnav.settings
import marvelnav.simulation as sim
import marvelnav.trainer as trainer
from marvelnav.errors import InputError, UnreachableError

ABLATIONS = {'full': {},
             'no_attention': {'attention': False},
             'no_entropy': {'entropy_term': False},
             'no_cross_entropy': {'expert_loss': False},
             'node2vec': {'embedding_method': 'node2vec'}}


def let_factory(scenario):
    return evaluation.let_baseline_policy(scenario.graph)


def expert_factory(scenario):
    return expert.ExpertPolicy()


def marvel_factory(settings):
    """Factory training the attention policy on each scenario it is given."""
    def factory(scenario):
        params, _ = trainer.train(scenario, settings, disable_tqdm=True)
        return policy_net.GatPolicy(params, settings)
    return factory


def default_policies():
    return {'LET': let_factory, 'expert': expert_factory}


def random_od_pairs(graph, n_pairs, rng):
    """
    Distinct origin-destination pairs drawn uniformly from the ordered node
    pairs joined by at least one path.
    """
    lengths = dict(nx.all_pairs_shortest_path_length(graph.digraph))
    reachable = [(src, dst) for src in graph.nodes for dst in graph.nodes
                 if src != dst and dst in lengths[src]]
    if len(reachable) < n_pairs:
        raise InputError('only {0} reachable OD pairs, {1} requested'.format(
            len(reachable), n_pairs))
    chosen = rng.choice(len(reachable), size=n_pairs, replace=False)
    return [reachable[i] for i in sorted(chosen)]


def random_weights(n_agents, rng):
    """Stochastic priority weights summing to one."""
    weights = rng.uniform(0.1, 1.0, size=n_agents)
    return weights / weights.sum()


def team_budgets(graph, od_pairs, weights, multiplier,
                 low_priority_multiplier=1.2):
    """
    Time budgets of a team: agents whose weight is at least the average
    get multiplier times their least expected time, the others
    low_priority_multiplier times it.
    """
    weights = np.asarray(weights, dtype=float)
    threshold = 1.0 / weights.shape[0]
    budgets = []
    for (origin, dest), weight in zip(od_pairs, weights):
        mult = (multiplier if weight >= threshold - 1e-12
                else low_priority_multiplier)
        budgets.append(mult * graphs.least_expected_time(graph, origin,
                                                         dest))
    return budgets


def team_scenario(graph, od_pairs, weights, multiplier, **kwargs):
    """ScenarioConfig of a team whose budgets follow team_budgets."""
    low = kwargs.pop('low_priority_multiplier', 1.2)
    budgets = team_budgets(graph, od_pairs, weights, multiplier, low)
    weights = np.asarray(weights, dtype=float) / np.sum(weights)
    agents = [sim.AgentSpec(i, origin, dest, budget, float(weight))
              for i, ((origin, dest), budget, weight)
              in enumerate(zip(od_pairs, budgets, weights))]
    return sim.ScenarioConfig(graph, agents, **kwargs)


def input_hash(graph, **parts):
    """
    Short digest of a graph and other battery inputs, used in cache file
    names so results computed from different inputs never collide.
    """
    config = {'nodes': list(graph.nodes),
              'edges': [list(edge) for edge in graph.edges]}
    config.update(parts)
    return data_io.config_hash(config)[:12]


def _cache_file(cache_dir, save_root):
    """Cache path without the .pkl extension added by nestcheck."""
    return os.path.join(cache_dir, save_root)


def _load(save_file):
    try:
        return iou.pickle_load(save_file)
    except (OSError, EOFError):
        print('Could not load file: ' + save_file)
    return None


@iou.timing_decorator
def toy_battery(policies=None, **kwargs):
    """
    Success rates of each robot and the team on the illustrative network
    under both priority scenarios.

    Parameters
    ----------
    policies: dict, optional
        Name -> policy factory. Defaults to the LET baseline and the expert.
    trials: int, optional
    master_seed: int, optional
    parallel: bool, optional
    max_workers: int or None, optional

    Returns
    -------
    results: pandas DataFrame
        Indexed by (scenario, policy, agent) with columns weight,
        on_time_probability and std_error.
    """
    trials = kwargs.pop('trials', 10000)
    master_seed = kwargs.pop('master_seed', 0)
    parallel = kwargs.pop('parallel', False)
    max_workers = kwargs.pop('max_workers', None)
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    if policies is None:
        policies = default_policies()
    frames = []
    for scenario_number in sorted(networks.TOY_SCENARIOS):
        scenario = networks.toy_scenario(scenario_number)
        for name, factory in policies.items():
            print('scenario={0} policy={1}'.format(scenario_number, name))
            report = evaluation.monte_carlo_sota(
                factory(scenario), scenario, trials=trials,
                master_seed=master_seed, parallel=parallel,
                max_workers=max_workers)
            table = report.table[['weight', 'on_time_probability',
                                  'std_error']].reset_index()
            table['scenario'] = scenario_number
            table['policy'] = name
            frames.append(table)
    results = pd.concat(frames, ignore_index=True)
    return results.set_index(['scenario', 'policy', 'agent'])


@iou.timing_decorator
def budget_battery(policies, graph, od_pairs, **kwargs):
    """
    Team on-time probability of each policy for tight, exact and relaxed
    budgets of the high-priority agents.

    OD pairs whose destination cannot be reached are skipped with a
    warning and listed in results.attrs['skipped'].

    Parameters
    ----------
    policies: dict
        Name -> policy factory.
    graph: UncertainGraph
    od_pairs: list of (origin, destination) tuples
    weights: array-like, optional
        Priority weights; random weights are drawn if absent.
    multipliers: tuple of floats, optional
    low_priority_multiplier: float, optional
    trials: int, optional
    master_seed: int, optional
    parallel: bool, optional
    max_workers: int or None, optional
    load: bool, optional
        Should results be loaded if available?
    save: bool, optional
        Should results be saved?
    cache_dir: str, optional
        Directory to use for caching.

    Returns
    -------
    results: pandas DataFrame
        Indexed by (policy, multiplier) with columns team_probability,
        std_error and n_agents.
    """
    weights = kwargs.pop('weights', None)
    multipliers = kwargs.pop('multipliers', (0.95, 1.0, 1.05))
    low = kwargs.pop('low_priority_multiplier', 1.2)
    trials = kwargs.pop('trials', 10000)
    master_seed = kwargs.pop('master_seed', 0)
    parallel = kwargs.pop('parallel', False)
    max_workers = kwargs.pop('max_workers', None)
    load = kwargs.pop('load', False)
    save = kwargs.pop('save', False)
    cache_dir = kwargs.pop('cache_dir', 'cache')
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    if not od_pairs:
        raise InputError('need at least one OD pair')
    if weights is None:
        weights = random_weights(len(od_pairs),
                                 np.random.default_rng(master_seed))
    digest = input_hash(graph, od_pairs=[list(pair) for pair in od_pairs],
                        weights=[float(w) for w in weights],
                        multipliers=[float(m) for m in multipliers],
                        low_priority_multiplier=float(low))
    save_root = 'budget_{0}pairs_{1}_{2}trials_seed{3}_{4}'.format(
        len(od_pairs), '_'.join(sorted(policies)), trials, master_seed,
        digest).replace('.', '_')
    save_file = _cache_file(cache_dir, save_root)
    if load:
        results = _load(save_file)
        if results is not None:
            return results
    kept = []
    kept_weights = []
    skipped = []
    for pair, weight in zip(od_pairs, weights):
        try:
            graphs.least_expected_time(graph, *pair)
        except UnreachableError:
            warnings.warn('skipping unreachable OD pair {0}'.format(pair),
                          UserWarning)
            skipped.append(pair)
            continue
        kept.append(pair)
        kept_weights.append(weight)
    if not kept:
        raise InputError('no reachable OD pairs')
    rows = []
    for name, factory in policies.items():
        for multiplier in multipliers:
            print('policy={0} multiplier={1}'.format(name, multiplier))
            scenario = team_scenario(graph, kept, kept_weights, multiplier,
                                     low_priority_multiplier=low,
                                     seed=master_seed)
            report = evaluation.monte_carlo_sota(
                factory(scenario), scenario, trials=trials,
                master_seed=master_seed, parallel=parallel,
                max_workers=max_workers)
            rows.append({'policy': name, 'multiplier': multiplier,
                         'team_probability': report.team_probability,
                         'std_error': report.team_std_error,
                         'n_agents': len(kept)})
    results = pd.DataFrame(rows).set_index(['policy', 'multiplier'])
    results.attrs['skipped'] = skipped
    if save:
        print('budget_battery: saving results to\n' + save_file)
        iou.pickle_save(results, save_file, overwrite_existing=True)
    return results


def ablation_settings(settings, name):
    """Copy of settings with one ablation applied."""
    values = settings.get_settings_dict()
    values.update(ABLATIONS[name])
    return marvelnav.settings.MarvelSettings(**values)


@iou.timing_decorator
def ablation_battery(scenario, settings, **kwargs):
    """
    Train and evaluate the full configuration and each ablation.

    Parameters
    ----------
    scenario: ScenarioConfig
    settings: MarvelSettings
        The full configuration.
    configurations: list of str, optional
        Keys of ABLATIONS; defaults to every ablation except node2vec.
    trials: int, optional
    master_seed: int, optional
    parallel: bool, optional
    max_workers: int or None, optional
    load: bool, optional
    save: bool, optional
    cache_dir: str, optional

    Returns
    -------
    results: pandas DataFrame
        Indexed by configuration with columns team_probability, std_error,
        convergence_epoch (nan if not convergent) and converged.
    """
    configurations = kwargs.pop('configurations',
                                ['full', 'no_attention', 'no_entropy',
                                 'no_cross_entropy'])
    trials = kwargs.pop('trials', 10000)
    master_seed = kwargs.pop('master_seed', 0)
    parallel = kwargs.pop('parallel', False)
    max_workers = kwargs.pop('max_workers', None)
    load = kwargs.pop('load', False)
    save = kwargs.pop('save', False)
    cache_dir = kwargs.pop('cache_dir', 'cache')
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    digest = input_hash(
        scenario.graph, agents=[list(agent) for agent in scenario.agents],
        scenario_seed=scenario.seed, truncate=scenario.truncate,
        configurations=list(configurations), master_seed=master_seed)
    save_file = _cache_file(cache_dir, 'ablation_{0}_{1}trials_{2}'.format(
        settings.save_name(), trials, digest))
    if load:
        results = _load(save_file)
        if results is not None:
            return results
    rows = []
    for name in configurations:
        print('ablation=' + name)
        run_settings = ablation_settings(settings, name)
        params, log = trainer.train(scenario, run_settings,
                                    disable_tqdm=True)
        report = evaluation.monte_carlo_sota(
            policy_net.GatPolicy(params, run_settings), scenario,
            trials=trials, master_seed=master_seed, parallel=parallel,
            max_workers=max_workers)
        epoch = trainer.convergence_epoch(log)
        if epoch is None:
            warnings.warn('{0} did not converge in {1} epochs'.format(
                name, run_settings.epochs), UserWarning)
        rows.append({'configuration': name,
                     'team_probability': report.team_probability,
                     'std_error': report.team_std_error,
                     'convergence_epoch': (np.nan if epoch is None
                                           else epoch),
                     'converged': epoch is not None})
    results = pd.DataFrame(rows).set_index('configuration')
    if save:
        print('ablation_battery: saving results to\n' + save_file)
        iou.pickle_save(results, save_file, overwrite_existing=True)
    return results
