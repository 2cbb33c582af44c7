#!/usr/bin/env python
"""
Uncertain directed networks, team belief states, shortest path queries and
graph entropy.

An uncertain edge (p_open < 1) is either traversable or blocked for a whole
episode, and its status is revealed to the team as soon as any agent reaches
the edge's start node. Certain edges (p_open = 1) are always open and are not
tracked in belief states.
"""

import collections
import enum
import numpy as np
import networkx as nx
import marvelnav.maths_functions as mf
from marvelnav.errors import InputError, InvariantError, UnreachableError


class EdgeStatus(enum.Enum):

    """Team knowledge about one uncertain edge."""

    UNKNOWN = 'unknown'
    OPEN = 'open'
    BLOCKED = 'blocked'


class UnknownMode(enum.Enum):

    """How shortest path queries treat edges whose status is Unknown."""

    EXPECTED_COST = 'expected_cost'
    EXCLUDE = 'exclude'


class EdgeAttr(collections.namedtuple(
        'EdgeAttr', ['id', 'source', 'target', 'mu', 'sigma', 'p_open'])):

    """
    One directed edge with a Gaussian travel cost and a probability of being
    traversable.

    Parameters
    ----------
    edge_id: int
        Position of the edge in its graph's edge sequence.
    source: node id
    target: node id
    mu: float
        Mean travel cost (time units), must be positive.
    sigma: float, optional
        Standard deviation of the travel cost.
    p_open: float, optional
        Probability the edge is traversable, in (0, 1].
    """

    __slots__ = ()

    def __new__(cls, edge_id, source, target, mu, sigma=0.0, p_open=1.0):
        mu = float(mu)
        sigma = float(sigma)
        p_open = float(p_open)
        label = '{0}-{1}'.format(source, target)
        if source == target:
            raise InputError('edge {0} is a self loop'.format(label))
        if not mu > 0:
            raise InputError('edge {0} has mu={1} (must be > 0)'
                             .format(label, mu))
        if not sigma >= 0:
            raise InputError('edge {0} has sigma={1} (must be >= 0)'
                             .format(label, sigma))
        if not 0 < p_open <= 1:
            raise InputError('edge {0} has p_open={1} (must be in (0, 1])'
                             .format(label, p_open))
        return super(EdgeAttr, cls).__new__(
            cls, int(edge_id), source, target, mu, sigma, p_open)

    @property
    def certain(self):
        """True if the edge can never be blocked."""
        return self.p_open == 1.0

    @property
    def label(self):
        """Edge label of the form 'source-target'."""
        return '{0}-{1}'.format(self.source, self.target)


class PathResult(collections.namedtuple(
        'PathResult', ['node_seq', 'mu_total', 'var_total', 'reachable',
                       'expected_cost'])):

    """
    Result of a shortest path query.

    mu_total and var_total are sums of the mean and variance of the edge
    costs along node_seq; expected_cost is the Dijkstra objective, which
    differs from mu_total when the path uses Unknown edges.
    """

    __slots__ = ()


UNREACHABLE = PathResult((), 0.0, 0.0, False, np.inf)


class UncertainGraph(object):

    """
    Directed network whose edges carry cost distributions and traversal
    probabilities.

    Parameters
    ----------
    nodes: iterable of node ids
        Node ids must be hashable and mutually orderable.
    edges: iterable of EdgeAttr
        Edge ids must equal each edge's position in the sequence. At most one
        edge may join any ordered pair of nodes.
    """

    def __init__(self, nodes, edges):
        self.nodes = tuple(sorted(set(nodes)))
        self.index = {node: i for i, node in enumerate(self.nodes)}
        self.edges = tuple(edges)
        out_adjacency = {node: [] for node in self.nodes}
        self._pairs = {}
        for position, edge in enumerate(self.edges):
            if edge.id != position:
                raise InputError('edge {0} has id {1} but is at position {2}'
                                 .format(edge.label, edge.id, position))
            for node in (edge.source, edge.target):
                if node not in self.index:
                    raise InputError('edge {0} references unknown node {1}'
                                     .format(edge.label, node))
            if (edge.source, edge.target) in self._pairs:
                raise InputError('parallel edges between {0}'
                                 .format(edge.label))
            self._pairs[(edge.source, edge.target)] = edge.id
            out_adjacency[edge.source].append(edge.id)
        self.out_adjacency = {node: tuple(ids) for node, ids
                              in out_adjacency.items()}
        self.uncertain_edges = tuple(edge.id for edge in self.edges
                                     if not edge.certain)
        self.digraph = nx.DiGraph()
        self.digraph.add_nodes_from(self.nodes)
        for edge in self.edges:
            self.digraph.add_edge(edge.source, edge.target, edge_id=edge.id)
        self.signature_hash = hash(self.signature)

    @classmethod
    def from_edge_list(cls, records, nodes=None):
        """
        Make a graph from (source, target, mu, sigma, p_open) tuples; edge ids
        follow the order of records. Nodes default to the edge endpoints.
        """
        edges = [EdgeAttr(i, *record) for i, record in enumerate(records)]
        if nodes is None:
            nodes = set()
        nodes = set(nodes)
        for edge in edges:
            nodes.update((edge.source, edge.target))
        return cls(nodes, edges)

    def __eq__(self, other):
        if not isinstance(other, UncertainGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __ne__(self, other):
        equal = self.__eq__(other)
        return equal if equal is NotImplemented else not equal

    __hash__ = None

    def __repr__(self):
        return ('UncertainGraph({0} nodes, {1} edges, {2} uncertain)'
                .format(len(self.nodes), len(self.edges),
                        len(self.uncertain_edges)))

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def signature(self):
        """Hashable summary of the graph, used as a cache key."""
        return (self.nodes, self.edges)

    def check_node(self, node):
        """Raise InputError if node is not in the graph."""
        if node not in self.index:
            raise InputError('unknown node id {0!r}'.format(node))

    def has_edge(self, source, target):
        return (source, target) in self._pairs

    def edge_between(self, source, target):
        """Return the EdgeAttr joining source to target."""
        try:
            return self.edges[self._pairs[(source, target)]]
        except KeyError:
            raise InputError('no edge {0}-{1}'.format(source, target))

    def edge_by_label(self, label):
        """Return the EdgeAttr with label 'source-target'."""
        for edge in self.edges:
            if edge.label == label:
                return edge
        raise InputError('no edge labelled {0!r}'.format(label))

    def candidate_edges(self, node, belief):
        """Ids of edges leaving node which are not known to be Blocked."""
        self.check_node(node)
        return [edge_id for edge_id in self.out_adjacency[node]
                if belief.status_of(edge_id) is not EdgeStatus.BLOCKED]

    def prior_belief(self):
        """Belief with every uncertain edge Unknown and no agents."""
        return BeliefState({edge_id: EdgeStatus.UNKNOWN
                            for edge_id in self.uncertain_edges}, {}, {})

    def neighbourhood_arrays(self, belief, self_loops=True):
        """
        Index arrays (src, dst) listing node i attending to node j for every
        non-Blocked edge i->j, plus i->i when self_loops is True. Self loops
        come first, then edges in edge id order.
        """
        src = []
        dst = []
        if self_loops:
            src.extend(range(len(self.nodes)))
            dst.extend(range(len(self.nodes)))
        for edge in self.edges:
            if belief.status_of(edge.id) is not EdgeStatus.BLOCKED:
                src.append(self.index[edge.source])
                dst.append(self.index[edge.target])
        return np.asarray(src, dtype=int), np.asarray(dst, dtype=int)


class BeliefState(object):

    """
    Team-shared knowledge about uncertain edges plus the position, elapsed
    time and status of each agent.

    Instances are treated as immutable: the with_* methods return updated
    copies.

    Parameters
    ----------
    status: dict
        Uncertain edge id -> EdgeStatus.
    positions: dict
        Agent id -> current node.
    spent: dict
        Agent id -> elapsed time.
    arrived: dict, optional
        Agent id -> bool. Defaults to False for every agent.
    failed: dict, optional
        Agent id -> None, 'late' or 'stuck'. Defaults to None.
    """

    __slots__ = ('_status', '_positions', '_spent', '_arrived', '_failed')

    def __init__(self, status, positions, spent, arrived=None, failed=None):
        self._status = dict(status)
        self._positions = dict(positions)
        self._spent = {agent: float(time) for agent, time in spent.items()}
        if arrived is None:
            arrived = {agent: False for agent in self._positions}
        if failed is None:
            failed = {agent: None for agent in self._positions}
        self._arrived = dict(arrived)
        self._failed = dict(failed)
        for agent, time in self._spent.items():
            if time < 0:
                raise InvariantError('agent {0} has negative spent time {1}'
                                     .format(agent, time))

    def __getstate__(self):
        return (self._status, self._positions, self._spent, self._arrived,
                self._failed)

    def __setstate__(self, state):
        (self._status, self._positions, self._spent, self._arrived,
         self._failed) = state

    def __repr__(self):
        return 'BeliefState(positions={0}, spent={1}, unknown={2})'.format(
            self._positions, self._spent, len(self.unknown_edges()))

    # read-only views; callers must not mutate the returned dicts
    @property
    def status(self):
        return self._status

    @property
    def positions(self):
        return self._positions

    @property
    def spent(self):
        return self._spent

    @property
    def arrived(self):
        return self._arrived

    @property
    def failed(self):
        return self._failed

    def status_of(self, edge_id):
        """Status of any edge; certain edges are always Open."""
        return self._status.get(edge_id, EdgeStatus.OPEN)

    def unknown_edges(self):
        return sorted(edge_id for edge_id, status in self._status.items()
                      if status is EdgeStatus.UNKNOWN)

    def status_key(self):
        """Hashable signature of the edge statuses."""
        return tuple((edge_id, self._status[edge_id].value)
                     for edge_id in sorted(self._status))

    def is_active(self, agent):
        return not self._arrived[agent] and self._failed[agent] is None

    def with_status(self, updates):
        """Copy with some edge statuses replaced."""
        status = dict(self._status)
        for edge_id, new in updates.items():
            if edge_id not in status:
                raise InvariantError('edge {0} is not uncertain'
                                     .format(edge_id))
            status[edge_id] = new
        return BeliefState(status, self._positions, self._spent,
                           self._arrived, self._failed)

    def with_agent(self, agent, position=None, spent=None, arrived=None,
                   failed=None):
        """Copy with one agent's record updated."""
        if agent not in self._positions:
            raise InputError('unknown agent id {0!r}'.format(agent))
        positions = dict(self._positions)
        spent_dict = dict(self._spent)
        arrived_dict = dict(self._arrived)
        failed_dict = dict(self._failed)
        if position is not None:
            positions[agent] = position
        if spent is not None:
            spent_dict[agent] = spent
        if arrived is not None:
            arrived_dict[agent] = arrived
        if failed is not None:
            failed_dict[agent] = failed
        return BeliefState(self._status, positions, spent_dict, arrived_dict,
                           failed_dict)


def initial_belief(graph, agents, oracle=None):
    """
    Belief at the start of an episode: every uncertain edge Unknown and each
    agent at its origin with no time spent. If an oracle is given the edges
    leaving every origin are revealed.

    Parameters
    ----------
    graph: UncertainGraph
    agents: iterable of AgentSpec-like objects
        Must have id, origin and destination attributes.
    oracle: callable or dict, optional
        Maps an edge id to True if the edge is open.

    Returns
    -------
    BeliefState
    """
    agents = list(agents)
    for agent in agents:
        graph.check_node(agent.origin)
    belief = BeliefState(
        {edge_id: EdgeStatus.UNKNOWN for edge_id in graph.uncertain_edges},
        {agent.id: agent.origin for agent in agents},
        {agent.id: 0.0 for agent in agents},
        {agent.id: agent.origin == agent.destination for agent in agents})
    if oracle is not None:
        for agent in agents:
            belief = reveal_edges_at(graph, belief, agent.origin, oracle)
    return belief


def _edge_weight_function(graph, belief, unknown_mode):
    """Dijkstra weight callable; returning None hides an edge."""
    exclude = UnknownMode(unknown_mode) is UnknownMode.EXCLUDE

    def weight(_source, _target, data):
        edge = graph.edges[data['edge_id']]
        status = belief.status_of(edge.id)
        if status is EdgeStatus.BLOCKED:
            return None
        if status is EdgeStatus.UNKNOWN:
            if exclude:
                return None
            return edge.mu / edge.p_open
        return edge.mu

    return weight


def path_result(graph, node_seq, expected_cost=None):
    """PathResult for a given node sequence."""
    node_seq = tuple(node_seq)
    edges = [graph.edge_between(u, v) for u, v in zip(node_seq[:-1],
                                                      node_seq[1:])]
    mu_total = 0.0
    var_total = 0.0
    for edge in edges:
        mu_total += edge.mu
        var_total += edge.sigma ** 2
    if expected_cost is None:
        expected_cost = mu_total
    return PathResult(node_seq, mu_total, var_total, True,
                      float(expected_cost))


def shortest_path_expected(graph, belief, src, dst,
                           unknown_mode=UnknownMode.EXPECTED_COST):
    """
    Dijkstra shortest path from src to dst under a belief.

    Open and certain edges cost mu. Unknown edges cost mu / p_open in
    EXPECTED_COST mode and are ignored in EXCLUDE mode. Blocked edges are
    always ignored.

    Parameters
    ----------
    graph: UncertainGraph
    belief: BeliefState or None
        None means the prior belief (all uncertain edges Unknown).
    src: node id
    dst: node id
    unknown_mode: UnknownMode or str, optional

    Returns
    -------
    PathResult
        reachable is False (and node_seq empty) if there is no path.
    """
    graph.check_node(src)
    graph.check_node(dst)
    if belief is None:
        belief = graph.prior_belief()
    weight = _edge_weight_function(graph, belief, unknown_mode)
    try:
        cost, node_seq = nx.single_source_dijkstra(
            graph.digraph, src, target=dst, weight=weight)
    except nx.NetworkXNoPath:
        return UNREACHABLE
    return path_result(graph, node_seq, expected_cost=cost)


def shortest_paths_to(graph, belief, dst,
                      unknown_mode=UnknownMode.EXPECTED_COST):
    """
    Shortest paths from every node which can reach dst, computed with one
    Dijkstra run on the reversed graph.

    Returns
    -------
    dict
        Node -> PathResult (nodes which cannot reach dst are absent).
    """
    graph.check_node(dst)
    if belief is None:
        belief = graph.prior_belief()
    weight = _edge_weight_function(graph, belief, unknown_mode)
    costs, paths = nx.single_source_dijkstra(
        graph.digraph.reverse(copy=False), dst, weight=weight)
    return {node: path_result(graph, reversed(path),
                              expected_cost=costs[node])
            for node, path in paths.items()}


def least_expected_time(graph, src, dst, belief=None):
    """
    Least expected travel time from src to dst, treating uncertain edges at
    their expected cost; time budgets are multiples of this value.

    Raises
    ------
    UnreachableError
        If dst cannot be reached from src.
    """
    result = shortest_path_expected(graph, belief, src, dst,
                                    UnknownMode.EXPECTED_COST)
    if not result.reachable:
        raise UnreachableError('node {0} cannot reach node {1}'
                               .format(src, dst))
    return result.mu_total


def graph_entropy(graph, belief):
    """
    Summed binary entropy (nats) of the uncertain edges whose status is still
    Unknown.
    """
    p_unknown = [graph.edges[edge_id].p_open
                 for edge_id in belief.unknown_edges()]
    if not p_unknown:
        return 0.0
    return float(np.sum(mf.binary_entropy(np.asarray(p_unknown))))


def entropy_delta(graph, belief_before, belief_after):
    """
    Entropy removed from the graph between two beliefs, which is the summed
    binary entropy of the edges revealed in between.

    Raises
    ------
    InvariantError
        If the beliefs track different edges, or an edge changes status
        other than from Unknown.
    """
    before = belief_before.status
    after = belief_after.status
    if set(before) != set(after):
        raise InvariantError('beliefs track different uncertain edges')
    for edge_id, old in before.items():
        new = after[edge_id]
        if old is not EdgeStatus.UNKNOWN and new is not old:
            raise InvariantError(
                'edge {0} changed from {1} to {2}'.format(
                    graph.edges[edge_id].label, old.value, new.value))
    return (graph_entropy(graph, belief_before)
            - graph_entropy(graph, belief_after))


def reveal_edges_at(graph, belief, node, oracle):
    """
    Reveal every Unknown edge starting at node. The updated statuses are
    shared by the whole team.

    Parameters
    ----------
    graph: UncertainGraph
    belief: BeliefState
    node: node id
    oracle: callable or dict
        Maps an edge id to True if the edge is open.

    Returns
    -------
    BeliefState
        The input belief itself if nothing was revealed.
    """
    graph.check_node(node)
    if not callable(oracle):
        oracle = oracle.__getitem__
    updates = {}
    for edge_id in graph.out_adjacency[node]:
        if belief.status_of(edge_id) is EdgeStatus.UNKNOWN:
            updates[edge_id] = (EdgeStatus.OPEN if oracle(edge_id)
                                else EdgeStatus.BLOCKED)
    if not updates:
        return belief
    return belief.with_status(updates)


def node_entropy(graph, belief):
    """
    Per-node entropy of the Unknown edges starting at each node, in the
    order of graph.nodes.
    """
    values = np.zeros(len(graph.nodes))
    for edge_id in belief.unknown_edges():
        edge = graph.edges[edge_id]
        values[graph.index[edge.source]] += mf.binary_entropy(edge.p_open)
    return values
