#!/usr/bin/env python
"""
Built-in networks: the 14-node two-robot illustrative network, the Sioux
Falls network shipped with the package, and random networks for testing.

Illustrative network layout
---------------------------
Robot A travels 9 -> 12 with a tight budget. Its direct route is
9 -> 10 -> 11 -> 12 (mean 6.0, budget 7.0); the detour 10 -> 13 -> 11 costs
exactly 1.0 more and lets it check the uncertain edge 13 -> 4.

Robot B travels 1 -> 8 with budget 14.0 and reaches node 3 after a mean of
5.0. From node 3 it can go via 14 -> 13 -> 4 -> 8 (mean 6.5, or an expected
8.0 while 13 -> 4 is unknown) or via 5 -> 6 -> 7 -> 8 (mean 8.5).

Every edge has sigma = 0.1 * mu and 13 -> 4 is open with probability 0.5.
"""

import os
import numpy as np
import marvelnav.graphs as graphs
import marvelnav.simulation as sim

TOY_EDGES = [
    # robot A side
    (9, 10, 2.0),
    (10, 11, 2.0),
    (11, 12, 2.0),
    (10, 13, 1.5),
    (13, 11, 1.5),
    (13, 10, 1.5),
    # robot B side
    (1, 2, 2.5),
    (2, 3, 2.5),
    (3, 14, 1.5),
    (14, 13, 1.5),
    (13, 4, 1.5),
    (4, 8, 2.0),
    (3, 5, 2.0),
    (5, 6, 2.0),
    (6, 7, 2.0),
    (7, 8, 2.5),
    (13, 14, 1.5),
    (14, 3, 1.5)]
TOY_UNCERTAIN = {(13, 4): 0.5}
TOY_SIGMA_FRACTION = 0.1
TOY_SCENARIOS = {1: (0.7, 0.3), 2: (0.3, 0.7)}
DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')


def toy_network():
    """
    The 14-node illustrative network with one uncertain edge 13 -> 4.

    Returns
    -------
    UncertainGraph
    """
    records = []
    for source, target, mu in TOY_EDGES:
        p_open = TOY_UNCERTAIN.get((source, target), 1.0)
        records.append((source, target, mu, TOY_SIGMA_FRACTION * mu,
                        p_open))
    return graphs.UncertainGraph.from_edge_list(records,
                                                nodes=range(1, 15))


def toy_agents(weights=(0.3, 0.7)):
    """Robots A (9 -> 12, budget 7) and B (1 -> 8, budget 14)."""
    return [sim.AgentSpec('A', 9, 12, 7.0, weights[0]),
            sim.AgentSpec('B', 1, 8, 14.0, weights[1])]


def toy_scenario(scenario=2, **kwargs):
    """
    Illustrative two-robot scenario.

    Parameters
    ----------
    scenario: int, optional
        1 gives Robot A the higher priority (weights [0.7, 0.3]); 2 gives
        Robot B the higher priority (weights [0.3, 0.7]).
    kwargs: dict, optional
        Passed to ScenarioConfig.

    Returns
    -------
    ScenarioConfig
    """
    weights = TOY_SCENARIOS[scenario]
    return sim.ScenarioConfig(toy_network(), toy_agents(weights),
                              **kwargs)


def sioux_falls():
    """Sioux Falls network with the example uncertainty sidecar."""
    import marvelnav.data_io as data_io
    return data_io.load_tntp(
        os.path.join(DATA_DIR, 'SiouxFalls_net.tntp'),
        os.path.join(DATA_DIR, 'SiouxFalls_uncertainty.csv'))


def random_network(n_nodes, rng, **kwargs):
    """
    Random strongly connected network: a directed ring plus random chords.

    Parameters
    ----------
    n_nodes: int
    rng: numpy.random.Generator
    chord_prob: float, optional
        Probability of each possible chord.
    uncertain_prob: float, optional
        Probability that a chord is uncertain.
    sigma_fraction: float, optional
        sigma = sigma_fraction * mu on every edge.
    integer_costs: bool, optional
        Draw mu from the integers 1..5 instead of uniformly in [1, 5].

    Returns
    -------
    UncertainGraph
    """
    chord_prob = kwargs.pop('chord_prob', 0.3)
    uncertain_prob = kwargs.pop('uncertain_prob', 0.3)
    sigma_fraction = kwargs.pop('sigma_fraction', 0.2)
    integer_costs = kwargs.pop('integer_costs', False)
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))

    def draw_mu():
        if integer_costs:
            return float(rng.integers(1, 6))
        return float(rng.uniform(1, 5))

    records = []
    for node in range(n_nodes):
        mu = draw_mu()
        records.append((node, (node + 1) % n_nodes, mu, sigma_fraction * mu,
                        1.0))
    for source in range(n_nodes):
        for target in range(n_nodes):
            if target in (source, (source + 1) % n_nodes):
                continue
            if rng.random() < chord_prob:
                mu = draw_mu()
                p_open = 1.0
                if rng.random() < uncertain_prob:
                    p_open = float(np.round(rng.uniform(0.2, 0.9), 2))
                records.append((source, target, mu, sigma_fraction * mu,
                                p_open))
    return graphs.UncertainGraph.from_edge_list(records,
                                                nodes=range(n_nodes))
