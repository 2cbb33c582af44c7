#!/usr/bin/env python
"""
Event-driven multi-agent episode simulator.

Agents act one at a time in order of their elapsed time. An agent at a node
asks its policy for an outgoing edge, pays a travel cost drawn from a
Gaussian truncated below at half the edge's mean, and on arrival reveals
every uncertain edge starting at the new node to the whole team.

A policy is any object with a method

    act(scenario, belief, agent_id, rng) -> edge id

which may raise DeadEndError when it has nothing to choose.
"""

import collections
import heapq
import numpy as np
import marvelnav.graphs as graphs
import marvelnav.maths_functions as mf
from marvelnav.errors import (ConfigurationError, ContractError,
                              DeadEndError, InputError)


class AgentSpec(collections.namedtuple(
        'AgentSpec', ['id', 'origin', 'destination', 'budget', 'weight'])):

    """
    One agent's task.

    Parameters
    ----------
    id: str or int
    origin: node id
    destination: node id
    budget: float
        Time budget T.
    weight: float
        Team priority weight lambda.
    """

    __slots__ = ()

    def __new__(cls, agent_id, origin, destination, budget, weight=1.0):
        if origin == destination:
            raise InputError('agent {0} has origin == destination'
                             .format(agent_id))
        budget = float(budget)
        if not budget > 0:
            raise InputError('agent {0} has budget {1} (must be > 0)'
                             .format(agent_id, budget))
        return super(AgentSpec, cls).__new__(
            cls, agent_id, origin, destination, budget, float(weight))


class ScenarioConfig(object):

    """
    A network together with a team of agents.

    Parameters
    ----------
    graph: UncertainGraph
    agents: iterable of AgentSpec
        Weights must lie in (0, 1] and sum to one.
    seed: int, optional
        Master seed used when no random generator is supplied.
    truncate: bool, optional
        Whether travel costs are truncated below at floor_fraction * mu.
        False is a test mode giving plain Gaussian costs.
    floor_fraction: float, optional
    multipliers: list of floats or None, optional
        Budget multipliers of t_LET used to derive each agent's budget, if
        the budgets were derived that way.
    """

    def __init__(self, graph, agents, **kwargs):
        self.graph = graph
        self.agents = tuple(agents)
        self.seed = kwargs.pop('seed', 0)
        self.truncate = kwargs.pop('truncate', True)
        self.floor_fraction = kwargs.pop('floor_fraction', 0.5)
        self.multipliers = kwargs.pop('multipliers', None)
        if kwargs:
            raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
        if not self.agents:
            raise ConfigurationError('scenario has no agents')
        ids = [agent.id for agent in self.agents]
        if len(set(ids)) != len(ids):
            raise ConfigurationError('duplicate agent ids: {0}'.format(ids))
        for agent in self.agents:
            graph.check_node(agent.origin)
            graph.check_node(agent.destination)
            if not 0 < agent.weight <= 1:
                raise ConfigurationError(
                    'agent {0} has weight {1} outside (0, 1]'.format(
                        agent.id, agent.weight))
        if abs(sum(agent.weight for agent in self.agents) - 1) > 1e-9:
            raise ConfigurationError('agent weights must sum to 1, got {0}'
                                     .format(self.weights))
        self._index = {agent_id: i for i, agent_id in enumerate(ids)}

    @classmethod
    def from_od_pairs(cls, graph, od_pairs, weights, multipliers, **kwargs):
        """
        Make a scenario whose budgets are multiples of each OD pair's least
        expected time.

        Parameters
        ----------
        graph: UncertainGraph
        od_pairs: list of (origin, destination) tuples
        weights: list of floats
        multipliers: float or list of floats
        ids: list, optional
            Agent ids; defaults to 0, 1, ...
        kwargs: dict, optional
            Passed to the ScenarioConfig constructor.
        """
        ids = kwargs.pop('ids', list(range(len(od_pairs))))
        if np.isscalar(multipliers):
            multipliers = [multipliers] * len(od_pairs)
        assert len(ids) == len(od_pairs) == len(weights) == len(multipliers)
        agents = []
        for agent_id, (origin, dest), weight, mult in zip(
                ids, od_pairs, weights, multipliers):
            t_let = graphs.least_expected_time(graph, origin, dest)
            agents.append(AgentSpec(agent_id, origin, dest, mult * t_let,
                                    weight))
        return cls(graph, agents, multipliers=list(multipliers), **kwargs)

    def __repr__(self):
        return 'ScenarioConfig({0}, agents={1})'.format(self.graph,
                                                         list(self.agents))

    @property
    def weights(self):
        return np.asarray([agent.weight for agent in self.agents])

    @property
    def destinations(self):
        return tuple(sorted(set(agent.destination for agent in self.agents)))

    def agent(self, agent_id):
        return self.agents[self.agent_index(agent_id)]

    def agent_index(self, agent_id):
        try:
            return self._index[agent_id]
        except KeyError:
            raise InputError('unknown agent id {0!r}'.format(agent_id))

    def replace(self, **kwargs):
        """Copy with some constructor arguments replaced."""
        args = {'agents': self.agents, 'seed': self.seed,
                'truncate': self.truncate,
                'floor_fraction': self.floor_fraction,
                'multipliers': self.multipliers}
        args.update(kwargs)
        return ScenarioConfig(self.graph, args.pop('agents'), **args)

    def with_weights(self, weights):
        """Copy with new agent weights (normalised to sum to one)."""
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
        return self.replace(agents=[agent._replace(weight=float(w)) for
                                    agent, w in zip(self.agents, weights)])

    def with_budgets(self, budgets):
        """Copy with new agent budgets."""
        return self.replace(agents=[
            agent._replace(budget=float(budget))
            for agent, budget in zip(self.agents, budgets)])


class GroundTruth(object):

    """
    Hidden state of one episode: which uncertain edges are open, and the
    travel cost of every traversal.

    Travel costs are keyed on (agent index, edge id, visit number) so that
    the same draw is used whatever the budget or policy, giving common random
    numbers across experiments run with the same seeds.
    """

    def __init__(self, graph, open_edges, cost_seed, truncate=True,
                 floor_fraction=0.5):
        self.graph = graph
        self.open_edges = dict(open_edges)
        self.cost_seed = int(cost_seed)
        self.truncate = truncate
        self.floor_fraction = floor_fraction

    def is_open(self, edge_id):
        return self.open_edges.get(edge_id, True)

    def cost(self, agent_index, edge_id, visit=0):
        """Realised cost of an agent's visit-th traversal of an edge."""
        edge = self.graph.edges[edge_id]
        rng = np.random.default_rng([self.cost_seed, agent_index, edge_id,
                                     visit])
        return mf.truncated_gaussian_sample(
            edge.mu, edge.sigma, rng, floor_fraction=self.floor_fraction,
            truncate=self.truncate)


def sample_ground_truth(graph, rng, truncate=True, floor_fraction=0.5):
    """
    Draw which uncertain edges are open (independently with probability
    p_open) and a seed for the per-traversal travel costs.

    Parameters
    ----------
    graph: UncertainGraph
    rng: numpy.random.Generator
    truncate: bool, optional
    floor_fraction: float, optional

    Returns
    -------
    GroundTruth
    """
    draws = rng.random(len(graph.uncertain_edges))
    open_edges = {edge_id: bool(draw < graph.edges[edge_id].p_open)
                  for edge_id, draw in zip(graph.uncertain_edges, draws)}
    cost_seed = rng.integers(2 ** 32)
    return GroundTruth(graph, open_edges, cost_seed, truncate=truncate,
                       floor_fraction=floor_fraction)


Transition = collections.namedtuple(
    'Transition', ['agent', 'edge', 'cost', 'belief_before', 'belief_after',
                   'revealed', 'delta_h'])


def step(scenario, belief, agent_id, edge_id, ground_truth, visit=0):
    """
    Move an agent along one edge.

    The agent pays the realised cost, edges at the new node are revealed to
    the team, and the agent is marked arrived (if the new node is its
    destination) or failed 'late' (if its spent time now exceeds its
    budget).

    Parameters
    ----------
    scenario: ScenarioConfig
    belief: BeliefState
    agent_id: agent id
    edge_id: int
    ground_truth: GroundTruth
    visit: int, optional
        Number of earlier traversals of this edge by this agent.

    Returns
    -------
    Transition
    """
    graph = scenario.graph
    agent = scenario.agent(agent_id)
    if not belief.is_active(agent_id):
        raise ContractError('agent {0} has already finished'
                            .format(agent_id))
    try:
        edge = graph.edges[edge_id]
    except (IndexError, TypeError):
        raise InputError('unknown edge id {0!r}'.format(edge_id))
    position = belief.positions[agent_id]
    if edge.source != position:
        raise ContractError('agent {0} at node {1} cannot take edge {2}'
                            .format(agent_id, position, edge.label))
    status = belief.status_of(edge_id)
    if status is not graphs.EdgeStatus.OPEN:
        raise ContractError('agent {0} cannot take {1} edge {2}'.format(
            agent_id, status.value, edge.label))
    if not ground_truth.is_open(edge_id):
        raise ContractError('edge {0} believed open but is closed'
                            .format(edge.label))
    cost = ground_truth.cost(scenario.agent_index(agent_id), edge_id, visit)
    spent = belief.spent[agent_id] + cost
    arrived = edge.target == agent.destination
    failed = 'late' if not arrived and spent > agent.budget else None
    moved = belief.with_agent(agent_id, position=edge.target, spent=spent,
                              arrived=arrived, failed=failed)
    after = graphs.reveal_edges_at(graph, moved, edge.target,
                                   ground_truth.is_open)
    revealed = tuple(edge_id for edge_id in graph.out_adjacency[edge.target]
                     if moved.status_of(edge_id) is not
                     after.status_of(edge_id))
    delta_h = graphs.entropy_delta(graph, belief, after)
    return Transition(agent_id, edge_id, cost, belief, after, revealed,
                      delta_h)


def run_episode(policy, scenario, rng=None, **kwargs):
    """
    Simulate one episode until every agent has arrived or failed.

    Parameters
    ----------
    policy: object with an act method
    scenario: ScenarioConfig
    rng: numpy.random.Generator or None, optional
        Used to sample the ground truth (unless one is given) and passed to
        the policy. Defaults to a generator seeded with scenario.seed.
    ground_truth: GroundTruth, optional
        Fixed hidden state to use instead of sampling one.
    on_step: callable, optional
        Called with each Transition as soon as it happens.
    max_steps: int, optional
        Total number of moves after which remaining agents are marked
        'stuck'.

    Returns
    -------
    EpisodeOutcome
    """
    ground_truth = kwargs.pop('ground_truth', None)
    on_step = kwargs.pop('on_step', None)
    graph = scenario.graph
    max_steps = kwargs.pop('max_steps',
                           100 * len(graph.nodes) * len(scenario.agents))
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    if rng is None:
        rng = np.random.default_rng(scenario.seed)
    if ground_truth is None:
        ground_truth = sample_ground_truth(
            graph, rng, truncate=scenario.truncate,
            floor_fraction=scenario.floor_fraction)
    belief = graphs.initial_belief(graph, scenario.agents,
                                   oracle=ground_truth.is_open)
    start = belief
    queue = [(0.0, i) for i, agent in enumerate(scenario.agents)
             if belief.is_active(agent.id)]
    heapq.heapify(queue)
    visits = collections.Counter()
    transitions = []
    while queue:
        _, index = heapq.heappop(queue)
        agent = scenario.agents[index]
        if len(transitions) >= max_steps:
            belief = belief.with_agent(agent.id, failed='stuck')
            continue
        try:
            if not graph.candidate_edges(belief.positions[agent.id], belief):
                raise DeadEndError('agent {0} has no candidate edges at {1}'
                                   .format(agent.id,
                                           belief.positions[agent.id]))
            edge_id = policy.act(scenario, belief, agent.id, rng)
        except DeadEndError:
            belief = belief.with_agent(agent.id, failed='stuck')
            continue
        transition = step(scenario, belief, agent.id, edge_id, ground_truth,
                          visit=visits[(index, edge_id)])
        visits[(index, edge_id)] += 1
        transitions.append(transition)
        if on_step is not None:
            on_step(transition)
        belief = transition.belief_after
        if belief.is_active(agent.id):
            heapq.heappush(queue, (belief.spent[agent.id], index))
    return EpisodeOutcome(scenario, start, belief, transitions)


class EpisodeOutcome(object):

    """
    Record of one simulated episode.

    Attributes
    ----------
    arrival_times: dict
        Agent id -> spent time at arrival, or None if the agent failed.
    on_time: dict
        Agent id -> bool, arrived with spent time no greater than budget.
    failures: dict
        Agent id -> None, 'late' or 'stuck'.
    trajectories: dict
        Agent id -> list of step records (dicts) in time order.
    explored: list
        Ids of uncertain edges revealed by the end of the episode.
    delta_h: float
        Entropy removed between the initial and final beliefs.
    team_score: float
        Sum of agent weights times on-time indicators.
    """

    def __init__(self, scenario, start_belief, final_belief, transitions):
        graph = scenario.graph
        self.scenario = scenario
        self.initial_belief = start_belief
        self.final_belief = final_belief
        self.transitions = list(transitions)
        self.arrival_times = {}
        self.on_time = {}
        self.failures = {}
        for agent in scenario.agents:
            arrived = final_belief.arrived[agent.id]
            spent = final_belief.spent[agent.id]
            self.arrival_times[agent.id] = spent if arrived else None
            self.on_time[agent.id] = bool(arrived and spent <= agent.budget)
            self.failures[agent.id] = final_belief.failed[agent.id]
        self.trajectories = {agent.id: [] for agent in scenario.agents}
        for number, trans in enumerate(self.transitions):
            edge = graph.edges[trans.edge]
            self.trajectories[trans.agent].append({
                'step': number,
                'agent': trans.agent,
                'node': edge.source,
                'edge': edge.label,
                'head': edge.target,
                'cost': trans.cost,
                'spent': trans.belief_after.spent[trans.agent],
                'revealed': [graph.edges[e].label for e in trans.revealed],
                'delta_h': trans.delta_h})
        self.explored = [edge_id for edge_id in graph.uncertain_edges
                         if final_belief.status_of(edge_id) is not
                         graphs.EdgeStatus.UNKNOWN]
        self.delta_h = graphs.entropy_delta(graph, start_belief,
                                            final_belief)
        self.team_score = float(sum(
            agent.weight * self.on_time[agent.id]
            for agent in scenario.agents))

    def route(self, agent_id):
        """Nodes visited by an agent, starting with its origin."""
        agent = self.scenario.agent(agent_id)
        return [agent.origin] + [record['head'] for record
                                 in self.trajectories[agent_id]]

    def to_records(self):
        """All step records in the order they happened."""
        records = [rec for recs in self.trajectories.values()
                   for rec in recs]
        return sorted(records, key=lambda rec: rec['step'])
