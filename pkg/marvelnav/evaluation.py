#!/usr/bin/env python
"""
Monte-Carlo estimation of on-time arrival probabilities and the least
expected time baseline policy.
"""

import json
import numpy as np
import pandas as pd
import nestcheck.parallel_utils as pu
import marvelnav.graphs as graphs
import marvelnav.simulation as sim
from marvelnav.errors import DeadEndError, InputError


class LetPolicy(object):

    """
    Least expected time baseline: always take the first edge of the
    expected-cost shortest path to the destination under the current
    belief, replanning whenever an edge is revealed. It never explores on
    purpose.

    Parameters
    ----------
    graph: UncertainGraph
    """

    def __init__(self, graph):
        self.graph = graph
        self._cache = {}

    def act(self, scenario, belief, agent_id, rng=None):
        """Edge chosen by an agent (see module simulation)."""
        node = belief.positions[agent_id]
        dest = scenario.agent(agent_id).destination
        key = (belief.status_key(), node, dest)
        try:
            return self._cache[key]
        except KeyError:
            pass
        path = graphs.shortest_path_expected(
            self.graph, belief, node, dest, graphs.UnknownMode.EXPECTED_COST)
        if not path.reachable or len(path.node_seq) < 2:
            raise DeadEndError('agent {0} at {1} has no path to {2}'.format(
                agent_id, node, dest))
        edge_id = self.graph.edge_between(path.node_seq[0],
                                          path.node_seq[1]).id
        self._cache[key] = edge_id
        return edge_id


def let_baseline_policy(graph):
    """Return the least expected time baseline policy for a graph."""
    return LetPolicy(graph)


def episode_rng(master_seed, episode):
    """Independent random generator of one episode."""
    return np.random.default_rng([master_seed, episode])


def run_trial(policy, scenario, master_seed, trial):
    """
    Simulate one evaluation episode and summarise it.

    Returns
    -------
    dict
        Keys 'trial', 'on_time', 'arrival', 'failure' (dicts keyed by agent
        id), 'team_score' and 'delta_h'.
    """
    outcome = sim.run_episode(policy, scenario,
                              rng=episode_rng(master_seed, trial))
    return {'trial': trial,
            'on_time': outcome.on_time,
            'arrival': outcome.arrival_times,
            'failure': outcome.failures,
            'team_score': outcome.team_score,
            'delta_h': outcome.delta_h}


class EvalReport(object):

    """
    Summary of a Monte-Carlo evaluation.

    Attributes
    ----------
    table: pandas DataFrame
        One row per agent and a final 'team' row with columns weight,
        on_time_probability, std_error, mean_arrival_time and trials.
    trials: list of dicts
        Raw per-trial results from run_trial, in trial order.
    config: dict
        Echo of the evaluation inputs.
    """

    def __init__(self, scenario, trials, config):
        self.trials = trials
        self.config = config
        n_trials = len(trials)
        rows = []
        for agent in scenario.agents:
            hits = np.asarray([t['on_time'][agent.id] for t in trials],
                              dtype=float)
            p_hat = hits.mean()
            arrivals = [t['arrival'][agent.id] for t in trials
                        if t['arrival'][agent.id] is not None]
            rows.append({
                'agent': str(agent.id),
                'weight': agent.weight,
                'on_time_probability': p_hat,
                'std_error': np.sqrt(p_hat * (1 - p_hat) / n_trials),
                'mean_arrival_time': (np.mean(arrivals) if arrivals
                                      else np.nan),
                'trials': n_trials})
        scores = np.asarray([t['team_score'] for t in trials])
        rows.append({
            'agent': 'team',
            'weight': 1.0,
            'on_time_probability': float(np.sum(
                [row['weight'] * row['on_time_probability']
                 for row in rows])),
            'std_error': np.sqrt(np.var(scores) / n_trials),
            'mean_arrival_time': np.nan,
            'trials': n_trials})
        self.table = pd.DataFrame(rows).set_index('agent')

    @property
    def team_probability(self):
        return self.table.loc['team', 'on_time_probability']

    @property
    def team_std_error(self):
        return self.table.loc['team', 'std_error']

    def agent_probability(self, agent_id):
        return self.table.loc[str(agent_id), 'on_time_probability']

    def to_dict(self):
        """JSON-serialisable summary."""
        table = self.table.reset_index()
        table = table.astype(object).where(pd.notnull(table), None)
        return {'config': self.config,
                'rows': table.to_dict(orient='records')}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def monte_carlo_sota(policy, scenario, trials=10000, master_seed=0,
                     **kwargs):
    """
    Estimate each agent's probability of arriving within its budget, and the
    team's weighted probability, from independent simulated episodes.

    Episode i uses the random generator seeded with (master_seed, i), so
    results do not depend on parallelisation and runs with the same seeds
    share common random numbers.

    Parameters
    ----------
    policy: object with an act method
    scenario: ScenarioConfig
    trials: int, optional
    master_seed: int, optional
    parallel: bool, optional
        Should episodes be run in parallel processes?
    max_workers: int or None, optional
        Number of processes.

    Returns
    -------
    EvalReport
    """
    parallel = kwargs.pop('parallel', False)
    max_workers = kwargs.pop('max_workers', None)
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    if trials < 1:
        raise InputError('trials must be >= 1, got {0}'.format(trials))
    results = pu.parallel_apply(
        run_trial, range(trials),
        func_pre_args=(policy, scenario, master_seed),
        parallel=parallel, max_workers=max_workers,
        parallel_warning=False, tqdm_kwargs={'disable': True})
    # parallel_apply returns results in order of completion
    results = sorted(results, key=lambda res: res['trial'])
    config = {'trials': trials, 'master_seed': master_seed,
              'policy': type(policy).__name__,
              'agents': [dict(agent._asdict()) for agent in
                         scenario.agents]}
    return EvalReport(scenario, results, config)
