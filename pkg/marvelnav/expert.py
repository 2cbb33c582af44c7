#!/usr/bin/env python
"""
Centralised expert used as the imitation target during training, and the
exact team value oracle it is built on.

The oracle rolls the team forward on a mean clock: agents move in order of
elapsed mean time, each traversal adds the edge's mean cost to the agent's
clock and its variance to the agent's running variance, and the rollout
branches exactly over the open/blocked outcomes of every uncertain edge it
reveals. Unless told otherwise agents follow least expected time paths
under the current belief. An arrived agent's on-time probability is the
Gaussian probability that its clock is within budget; the team value is
the weighted sum of these probabilities minus the entropy left in the
graph.
"""

import collections
import itertools
import warnings
import numpy as np
import marvelnav.graphs as graphs
import marvelnav.maths_functions as mf
from marvelnav.errors import DeadEndError, InputError, InvariantError


def sota_surrogate(budget, spent, path, kappa=1.0, eps=1e-6):
    """
    Smooth stand-in for the on-time indicator: the logistic function of the
    agent's slack (budget minus time spent minus the remaining path's mean)
    scaled by kappa over the path's standard deviation.

    Parameters
    ----------
    budget: float
    spent: float
    path: PathResult
        Remaining path to the destination.
    kappa: float, optional
        Sharpness, must be > 0.
    eps: float, optional
        Variance floor.

    Returns
    -------
    float
        0 if the path is unreachable.
    """
    if not kappa > 0:
        raise InputError('kappa must be > 0, got {0}'.format(kappa))
    if not path.reachable:
        return 0.0
    z = kappa * (budget - spent - path.mu_total) / np.sqrt(
        path.var_total + eps)
    return float(mf.logistic(z))


def expert_target(n_candidates, position, temperature=0.1):
    """Softmax of the one-hot vector of the chosen edge over temperature."""
    onehot = np.zeros(n_candidates)
    onehot[position] = 1.0
    return mf.softmax(onehot / temperature)


class _Rollout(object):

    """Shared state of one value computation."""

    def __init__(self, scenario, weights, eta, policy, max_steps):
        self.scenario = scenario
        self.graph = scenario.graph
        self.weights = weights
        self.eta = eta
        self.policy = policy
        self.max_steps = max_steps
        self._paths = {}

    def let_edge(self, belief, node, dest):
        """First edge of the least expected time path, or None."""
        key = (belief.status_key(), dest)
        try:
            paths = self._paths[key]
        except KeyError:
            paths = graphs.shortest_paths_to(
                self.graph, belief, dest, graphs.UnknownMode.EXPECTED_COST)
            self._paths[key] = paths
        path = paths.get(node)
        if path is None or len(path.node_seq) < 2:
            return None
        return self.graph.edge_between(path.node_seq[0],
                                       path.node_seq[1]).id

    def next_edge(self, belief, agent):
        node = belief.positions[agent.id]
        if not self.graph.candidate_edges(node, belief):
            return None
        if self.policy is None:
            return self.let_edge(belief, node, agent.destination)
        try:
            return self.policy.act(self.scenario, belief, agent.id, None)
        except DeadEndError:
            return None

    def terminal_value(self, belief, variances):
        value = 0.0
        for agent, weight in zip(self.scenario.agents, self.weights):
            if belief.arrived[agent.id]:
                value += weight * float(mf.on_time_probability(
                    agent.budget, belief.spent[agent.id],
                    variances[agent.id]))
        return value - self.eta * graphs.graph_entropy(self.graph, belief)

    def branch(self, belief, variances, forced, steps, unknown):
        """Expected value over every outcome of the unknown edges."""
        total = 0.0
        for outcome in itertools.product((True, False), repeat=len(unknown)):
            prob = 1.0
            updates = {}
            for edge_id, is_open in zip(unknown, outcome):
                p_open = self.graph.edges[edge_id].p_open
                prob *= p_open if is_open else 1 - p_open
                updates[edge_id] = (graphs.EdgeStatus.OPEN if is_open else
                                    graphs.EdgeStatus.BLOCKED)
            if prob == 0:
                continue
            total += prob * self.value(belief.with_status(updates),
                                       variances, forced, steps)
        return total

    def value(self, belief, variances, forced, steps):
        agents = self.scenario.agents
        while True:
            active = [(belief.spent[agent.id], i) for i, agent
                      in enumerate(agents) if belief.is_active(agent.id)]
            if not active:
                return self.terminal_value(belief, variances)
            agent = agents[min(active)[1]]
            if steps >= self.max_steps:
                belief = belief.with_agent(agent.id, failed='stuck')
                continue
            if forced is not None and forced[0] == agent.id:
                edge_id = forced[1]
                forced = None
            else:
                edge_id = self.next_edge(belief, agent)
            if edge_id is None:
                belief = belief.with_agent(agent.id, failed='stuck')
                continue
            edge = self.graph.edges[edge_id]
            if belief.status_of(edge_id) is not graphs.EdgeStatus.OPEN:
                raise InvariantError('rollout moved agent {0} along {1} edge '
                                     '{2}'.format(agent.id,
                                                  belief.status_of(
                                                      edge_id).value,
                                                  edge.label))
            spent = belief.spent[agent.id] + edge.mu
            arrived = edge.target == agent.destination
            failed = ('late' if not arrived and spent > agent.budget
                      else None)
            belief = belief.with_agent(agent.id, position=edge.target,
                                       spent=spent, arrived=arrived,
                                       failed=failed)
            variances = dict(variances)
            variances[agent.id] += edge.sigma ** 2
            steps += 1
            unknown = [e for e in self.graph.out_adjacency[edge.target]
                       if belief.status_of(e) is graphs.EdgeStatus.UNKNOWN]
            if unknown:
                return self.branch(belief, variances, forced, steps, unknown)


def team_value(scenario, belief, **kwargs):
    """
    Expected team objective of a belief under the mean-clock rollout,
    computed exactly over every revelation outcome.

    Parameters
    ----------
    scenario: ScenarioConfig
    belief: BeliefState
    weights: array-like, optional
        Agent weights (normalised to sum to one); defaults to the
        scenario's.
    eta: float, optional
        Entropy coefficient; 0 removes the entropy term.
    policy: object with an act method, optional
        Behaviour of the agents in the rollout; defaults to least expected
        time paths.
    forced: (agent id, edge id), optional
        Edge taken by that agent on its next move.
    max_steps: int, optional
        Moves after which remaining agents are treated as stuck.

    Returns
    -------
    float
    """
    weights = kwargs.pop('weights', None)
    eta = kwargs.pop('eta', 1.0)
    policy = kwargs.pop('policy', None)
    forced = kwargs.pop('forced', None)
    max_steps = kwargs.pop('max_steps', 10 * scenario.graph.n_nodes *
                           len(scenario.agents))
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    weights = normalise_weights(scenario, weights)
    rollout = _Rollout(scenario, weights, eta, policy, max_steps)
    variances = {agent.id: 0.0 for agent in scenario.agents}
    unknown = sorted(set(
        edge_id for agent in scenario.agents if belief.is_active(agent.id)
        for edge_id in scenario.graph.out_adjacency[belief.positions[
            agent.id]]
        if belief.status_of(edge_id) is graphs.EdgeStatus.UNKNOWN))
    if unknown:
        if forced is not None and forced[1] in unknown:
            raise InvariantError('forced edge {0} is still Unknown'.format(
                scenario.graph.edges[forced[1]].label))
        return rollout.branch(belief, variances, forced, 0, unknown)
    return rollout.value(belief, variances, forced, 0)


def normalise_weights(scenario, weights=None):
    """Agent weights as an array summing to one."""
    if weights is None:
        return scenario.weights
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(scenario.agents),) or np.any(weights <= 0):
        raise InputError('need one positive weight per agent, got {0}'
                         .format(weights))
    return weights / weights.sum()


ExpertDecision = collections.namedtuple(
    'ExpertDecision', ['edge', 'candidates', 'target', 'values', 'mode'])


def expectimax_values(scenario, belief, acting, **kwargs):
    """
    Team value of each candidate edge of the acting agent, with everyone
    following least expected time paths afterwards.

    Returns
    -------
    candidates: tuple of edge ids
    values: 1d numpy array
    """
    candidates = _candidates(scenario, belief, acting)
    values = np.asarray([team_value(scenario, belief,
                                    forced=(acting, edge_id), **kwargs)
                         for edge_id in candidates])
    return candidates, values


def heuristic_values(scenario, belief, acting, **kwargs):
    """
    Cheap score of each candidate edge: the acting agent's weighted on-time
    surrogate of the edge plus the least expected time path from its head,
    plus eta times the entropy of the Unknown edges the head would reveal.

    Returns
    -------
    candidates: tuple of edge ids
    values: 1d numpy array
    """
    weights = normalise_weights(scenario, kwargs.pop('weights', None))
    eta = kwargs.pop('eta', 1.0)
    kappa = kwargs.pop('kappa', 1.0)
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    graph = scenario.graph
    agent = scenario.agent(acting)
    weight = weights[scenario.agent_index(acting)]
    entropy = graphs.node_entropy(graph, belief)
    paths = graphs.shortest_paths_to(graph, belief, agent.destination,
                                     graphs.UnknownMode.EXPECTED_COST)
    candidates = _candidates(scenario, belief, acting)
    values = []
    for edge_id in candidates:
        edge = graph.edges[edge_id]
        rest = paths.get(edge.target, graphs.UNREACHABLE)
        if rest.reachable:
            rest = rest._replace(mu_total=rest.mu_total + edge.mu,
                                 var_total=rest.var_total + edge.sigma ** 2)
        score = weight * sota_surrogate(agent.budget,
                                        belief.spent[acting], rest, kappa)
        values.append(score + eta * entropy[graph.index[edge.target]])
    return candidates, np.asarray(values)


def _candidates(scenario, belief, acting):
    if not belief.is_active(acting):
        raise InputError('agent {0} has already finished'.format(acting))
    node = belief.positions[acting]
    candidates = tuple(scenario.graph.candidate_edges(node, belief))
    if not candidates:
        raise DeadEndError('agent {0} has no candidate edges at {1}'.format(
            acting, node))
    for edge_id in candidates:
        if belief.status_of(edge_id) is not graphs.EdgeStatus.OPEN:
            raise InvariantError('edge {0} at agent {1}\'s position is '
                                 'unrevealed'.format(
                                     scenario.graph.edges[edge_id].label,
                                     acting))
    return candidates


def _argmax(values, tol=1e-12):
    """First index whose value is within tol of the maximum."""
    return int(np.flatnonzero(values >= np.max(values) - tol)[0])


class ExpertPolicy(object):

    """
    Centralised expert choosing each agent's edge with full knowledge of
    the team's belief.

    Expectimax mode scores every candidate edge with the exact team value
    oracle; it is only used while the belief has at most max_unknown
    Unknown edges and the graph at most max_nodes nodes, beyond which the
    heuristic mode is used with a warning.

    Parameters
    ----------
    mode: str, optional
        'expectimax' or 'heuristic'.
    max_unknown: int, optional
    max_nodes: int, optional
    temperature: float, optional
        Softens the one-hot target distribution.
    eta: float, optional
        Entropy coefficient.
    kappa: float, optional
        Surrogate sharpness (heuristic mode).
    weights: array-like or None, optional
        Agent weights overriding the scenario's.
    """

    def __init__(self, **kwargs):
        self.mode = kwargs.pop('mode', 'expectimax')
        self.max_unknown = kwargs.pop('max_unknown', 8)
        self.max_nodes = kwargs.pop('max_nodes', 30)
        self.temperature = kwargs.pop('temperature', 0.1)
        self.eta = kwargs.pop('eta', 1.0)
        self.kappa = kwargs.pop('kappa', 1.0)
        self.weights = kwargs.pop('weights', None)
        if kwargs:
            raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
        if self.mode not in ('expectimax', 'heuristic'):
            raise InputError('unknown expert mode {0!r}'.format(self.mode))
        self._warned = False

    @classmethod
    def from_settings(cls, settings, weights=None):
        """Expert configured from MarvelSettings."""
        return cls(mode=settings.expert_mode,
                   max_unknown=settings.max_expectimax_unknown,
                   max_nodes=settings.max_expectimax_nodes,
                   temperature=settings.expert_temperature,
                   eta=(settings.entropy_weight if settings.entropy_term
                        else 0.0),
                   kappa=settings.kappa, weights=weights)

    def effective_mode(self, scenario, belief):
        """Mode actually used for a belief, after the size limits."""
        if self.mode == 'heuristic':
            return 'heuristic'
        if (len(belief.unknown_edges()) <= self.max_unknown and
                scenario.graph.n_nodes <= self.max_nodes):
            return 'expectimax'
        if not self._warned:
            warnings.warn(
                ('expectimax limited to {0} unknown edges and {1} nodes '
                 '(have {2} and {3}): using the heuristic expert').format(
                     self.max_unknown, self.max_nodes,
                     len(belief.unknown_edges()), scenario.graph.n_nodes),
                UserWarning)
            self._warned = True
        return 'heuristic'

    def decide(self, scenario, belief, agent_id):
        """
        Expert decision for one agent.

        Returns
        -------
        ExpertDecision
            target is the softened one-hot distribution over candidates.
        """
        mode = self.effective_mode(scenario, belief)
        if mode == 'expectimax':
            candidates, values = expectimax_values(
                scenario, belief, agent_id, weights=self.weights,
                eta=self.eta)
        else:
            candidates, values = heuristic_values(
                scenario, belief, agent_id, weights=self.weights,
                eta=self.eta, kappa=self.kappa)
        best = _argmax(values)
        return ExpertDecision(candidates[best], candidates,
                              expert_target(len(candidates), best,
                                            self.temperature),
                              values, mode)

    def act(self, scenario, belief, agent_id, rng=None):
        """Edge chosen by an agent (see module simulation)."""
        return self.decide(scenario, belief, agent_id).edge


def expert_action(scenario, belief, acting, **kwargs):
    """
    The expert's edge for the acting agent and its softened one-hot target
    distribution over the candidate edges (in edge id order).

    Parameters
    ----------
    scenario: ScenarioConfig
    belief: BeliefState
    acting: agent id
    settings: MarvelSettings, optional
        Configures the expert; other kwargs are passed to ExpertPolicy
        instead.
    weights: array-like, optional

    Returns
    -------
    edge: int
    target: 1d numpy array
    """
    settings = kwargs.pop('settings', None)
    if settings is not None:
        expert = ExpertPolicy.from_settings(
            settings, weights=kwargs.pop('weights', None))
        if kwargs:
            raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    else:
        expert = ExpertPolicy(**kwargs)
    decision = expert.decide(scenario, belief, acting)
    return decision.edge, decision.target
