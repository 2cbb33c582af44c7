#!/usr/bin/env python
"""
Belief-aware node embeddings.

Corpora of weighted node chains are built from Dijkstra shortest paths to
every agent destination (recomputed whenever the team belief changes) and
embedded with a full-softmax skip-gram model. Positional channels are then
appended to give the feature matrix used by the policy network.

The skip-gram objective is evaluated in aggregated form: every
(center, context) pair within the window of a chain adds the chain weight
to a |V| x |V| co-occurrence matrix, so one epoch is one full-batch gradient
step.
"""

import collections
import numpy as np
import marvelnav.graphs as graphs
import marvelnav.maths_functions as mf
from marvelnav.errors import ConfigurationError, DataError, InputError

FEATURE_CHANNELS = ('ego_position', 'own_destination', 'other_destinations',
                    'remaining_budget', 'node_entropy')
EMBEDDING_HEADER = '# marvelnav-embeddings'


class Corpus(object):

    """
    Weighted node chains.

    Parameters
    ----------
    chains: list of tuples
        Each chain is a sequence of at least two node ids.
    weights: list of floats
        One weight per chain.
    nodes: tuple
        Vocabulary (all graph nodes, in graph order).
    """

    def __init__(self, chains, weights, nodes):
        self.chains = [tuple(chain) for chain in chains]
        self.weights = np.asarray(weights, dtype=float)
        self.nodes = tuple(nodes)
        assert len(self.chains) == self.weights.shape[0]
        vocab = set(self.nodes)
        for chain in self.chains:
            assert len(chain) >= 2, 'chain {0} is too short'.format(chain)
            assert set(chain) <= vocab, \
                'chain {0} has nodes outside the vocabulary'.format(chain)

    def __len__(self):
        return len(self.chains)

    def cooccurrence(self, window):
        """
        Summed chain weight of every (center, context) pair at most window
        positions apart.

        Returns
        -------
        2d numpy array
            Rows are centers, columns are contexts.
        """
        index = {node: i for i, node in enumerate(self.nodes)}
        counts = np.zeros((len(self.nodes), len(self.nodes)))
        for chain, weight in zip(self.chains, self.weights):
            ids = [index[node] for node in chain]
            for pos, center in enumerate(ids):
                for offset in range(-window, window + 1):
                    if offset == 0 or not 0 <= pos + offset < len(ids):
                        continue
                    counts[center, ids[pos + offset]] += weight
        return counts


class NodeEmbeddings(object):

    """
    Center and context vectors of every node.

    Parameters
    ----------
    center: 2d numpy array
        Shape (|V|, d); row i is the center vector of nodes[i].
    context: 2d numpy array
        Shape (|V|, d).
    nodes: tuple
    status_key: tuple or None, optional
        Belief status signature the vectors were trained under.
    """

    def __init__(self, center, context, nodes, status_key=None):
        self.center = np.asarray(center, dtype=float)
        self.context = np.asarray(context, dtype=float)
        self.nodes = tuple(nodes)
        self.status_key = status_key
        assert self.center.shape == self.context.shape
        assert self.center.shape[0] == len(self.nodes)
        if not (np.all(np.isfinite(self.center))
                and np.all(np.isfinite(self.context))):
            raise ConfigurationError('embeddings contain non-finite values')

    @property
    def dim(self):
        return self.center.shape[1]


FeatureMatrix = collections.namedtuple('FeatureMatrix', ['values',
                                                         'channels'])
FeatureMatrix.__doc__ = """
Node features: embedding columns followed by positional channels.

values: 2d numpy array of shape (|V|, d + len(FEATURE_CHANNELS)).
channels: tuple of channel names for the trailing columns.
"""


def build_corpus(graph, belief, destinations):
    """
    Shortest path chains to every destination plus one neighbour chain per
    node.

    Each node v contributes its Dijkstra path to every destination t
    (expected-cost mode, Blocked edges excluded) with weight
    1 / (1 + mu_total). Each node with at least one non-Blocked successor
    also contributes the chain [v, n_1, n_2, ...] of those successors,
    weighted by 1 / (1 + mean cost of the listed edges). Nodes which cannot
    reach any destination contribute their neighbour chain only.

    Parameters
    ----------
    graph: UncertainGraph
    belief: BeliefState
    destinations: iterable of node ids

    Returns
    -------
    Corpus
    """
    destinations = sorted(set(destinations))
    if not destinations:
        raise InputError('build_corpus needs at least one destination')
    chains = []
    weights = []
    for dest in destinations:
        paths = graphs.shortest_paths_to(graph, belief, dest)
        for node in graph.nodes:
            path = paths.get(node)
            if path is None or len(path.node_seq) < 2:
                continue
            chains.append(path.node_seq)
            weights.append(1.0 / (1.0 + path.mu_total))
    for node in graph.nodes:
        edge_ids = graph.candidate_edges(node, belief)
        if not edge_ids:
            continue
        mean_cost = np.mean([graph.edges[e].mu for e in edge_ids])
        chains.append((node,) + tuple(graph.edges[e].target
                                      for e in edge_ids))
        weights.append(1.0 / (1.0 + mean_cost))
    return Corpus(chains, weights, graph.nodes)


def random_walk_corpus(graph, belief, rng, **kwargs):
    """
    Second-order biased random walks over non-Blocked edges (node2vec
    style), each with unit weight. Only used for comparison with the
    shortest path corpus.

    Parameters
    ----------
    graph: UncertainGraph
    belief: BeliefState
    rng: numpy.random.Generator
    walks_per_node: int, optional
    walk_length: int, optional
    return_param: float, optional
        node2vec p; larger values make returning to the previous node less
        likely.
    inout_param: float, optional
        node2vec q; larger values keep walks local.

    Returns
    -------
    Corpus
    """
    walks_per_node = kwargs.pop('walks_per_node', 10)
    walk_length = kwargs.pop('walk_length', 8)
    return_param = kwargs.pop('return_param', 1.0)
    inout_param = kwargs.pop('inout_param', 1.0)
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    successors = {node: [graph.edges[e].target for e in
                         graph.candidate_edges(node, belief)]
                  for node in graph.nodes}
    chains = []
    for _ in range(walks_per_node):
        for start in graph.nodes:
            walk = [start]
            while len(walk) < walk_length and successors[walk[-1]]:
                options = successors[walk[-1]]
                if len(walk) == 1:
                    walk.append(options[rng.integers(len(options))])
                    continue
                prev = walk[-2]
                bias = np.empty(len(options))
                for i, nxt in enumerate(options):
                    if nxt == prev:
                        bias[i] = 1.0 / return_param
                    elif graph.has_edge(prev, nxt) or graph.has_edge(
                            nxt, prev):
                        bias[i] = 1.0
                    else:
                        bias[i] = 1.0 / inout_param
                walk.append(options[rng.choice(len(options),
                                               p=bias / bias.sum())])
            if len(walk) >= 2:
                chains.append(walk)
    return Corpus(chains, np.ones(len(chains)), graph.nodes)


def skipgram_loss_and_grad(center, context, cooccurrence):
    """
    Weighted skip-gram loss and its exact gradients.

    The loss is -sum_{c,o} W[c, o] log P(o | c) / sum(W), with
    P(o | c) = softmax_o(v_c . u_o) over every node.

    Parameters
    ----------
    center: 2d numpy array
        Center vectors V, shape (|V|, d).
    context: 2d numpy array
        Context vectors U, shape (|V|, d).
    cooccurrence: 2d numpy array
        W, shape (|V|, |V|).

    Returns
    -------
    loss: float
    grad_center: 2d numpy array
    grad_context: 2d numpy array
    """
    total = cooccurrence.sum()
    if not total > 0:
        raise InputError('empty corpus')
    scores = center @ context.T
    log_prob = mf.log_softmax(scores)
    loss = -np.sum(cooccurrence * log_prob) / total
    prob = np.exp(log_prob)
    grad_scores = (prob * cooccurrence.sum(axis=1)[:, None]
                   - cooccurrence) / total
    return loss, grad_scores @ context, grad_scores.T @ center


def skipgram_log_prob_grad(center, context, c_index, o_index):
    """
    log P(o | c) and its gradients for a single (center, context) pair.

    The gradient with respect to v_c is u_o - sum_j P(j | c) u_j and the
    gradient with respect to u_j is (1[j = o] - P(j | c)) v_c.

    Returns
    -------
    log_prob: float
    grad_center: 2d numpy array
        Nonzero only in row c_index.
    grad_context: 2d numpy array
    """
    scores = context @ center[c_index]
    log_prob = mf.log_softmax(scores)
    prob = np.exp(log_prob)
    grad_center = np.zeros_like(center)
    grad_center[c_index] = context[o_index] - prob @ context
    indicator = np.zeros(len(prob))
    indicator[o_index] = 1.0
    grad_context = np.outer(indicator - prob, center[c_index])
    return float(log_prob[o_index]), grad_center, grad_context


def train_skipgram(corpus, dim, window=2, epochs=100, lr=0.5, rng_seed=0,
                   **kwargs):
    """
    Fit center and context vectors to a corpus by full-batch gradient
    descent on the weighted skip-gram loss.

    Parameters
    ----------
    corpus: Corpus
    dim: int
        Embedding dimension d.
    window: int, optional
        Context window m.
    epochs: int, optional
    lr: float, optional
    rng_seed: int, optional
        Seeds the initial vectors (ignored when init is given).
    init: NodeEmbeddings, optional
        Warm start from these vectors.
    status_key: tuple, optional
        Stored on the returned embeddings.
    return_losses: bool, optional
        Also return the loss before each epoch and after the last one.

    Returns
    -------
    NodeEmbeddings, or (NodeEmbeddings, list of floats) if return_losses
    """
    init = kwargs.pop('init', None)
    status_key = kwargs.pop('status_key', None)
    return_losses = kwargs.pop('return_losses', False)
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    if dim < 1 or window < 1:
        raise ConfigurationError('need dim >= 1 and window >= 1, got '
                                 '{0} and {1}'.format(dim, window))
    if len(corpus) == 0:
        raise InputError('cannot train skip-gram on an empty corpus')
    cooc = corpus.cooccurrence(window)
    if init is None:
        rng = np.random.default_rng(rng_seed)
        scale = 1.0 / np.sqrt(dim)
        center = rng.normal(scale=scale, size=(len(corpus.nodes), dim))
        context = rng.normal(scale=scale, size=(len(corpus.nodes), dim))
    else:
        if init.center.shape != (len(corpus.nodes), dim):
            raise ConfigurationError(
                'warm start has shape {0}, expected {1}'.format(
                    init.center.shape, (len(corpus.nodes), dim)))
        center = init.center.copy()
        context = init.context.copy()
    losses = []
    for _ in range(epochs):
        loss, grad_center, grad_context = skipgram_loss_and_grad(
            center, context, cooc)
        losses.append(loss)
        center -= lr * grad_center
        context -= lr * grad_context
    embeddings = NodeEmbeddings(center, context, corpus.nodes,
                                status_key=status_key)
    if return_losses:
        losses.append(skipgram_loss_and_grad(center, context, cooc)[0])
        return embeddings, losses
    return embeddings


def corpus_loss(embeddings, corpus, window=2):
    """Skip-gram loss of embeddings on a corpus."""
    return skipgram_loss_and_grad(embeddings.center, embeddings.context,
                                  corpus.cooccurrence(window))[0]


def refresh(embeddings, graph, belief, destinations, **kwargs):
    """
    Update embeddings after the belief changed: rebuild the corpus under the
    new belief and fine-tune starting from the current vectors.

    If the belief has the same edge statuses the embeddings were trained
    under, they are returned unchanged.

    Parameters
    ----------
    embeddings: NodeEmbeddings
    graph: UncertainGraph
    belief: BeliefState
    destinations: iterable of node ids
    epochs: int, optional
    window: int, optional
    lr: float, optional

    Returns
    -------
    NodeEmbeddings
    """
    epochs = kwargs.pop('epochs', 10)
    window = kwargs.pop('window', 2)
    lr = kwargs.pop('lr', 0.5)
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    key = belief.status_key()
    if key == embeddings.status_key:
        return embeddings
    corpus = build_corpus(graph, belief, destinations)
    return train_skipgram(corpus, embeddings.dim, window=window,
                          epochs=epochs, lr=lr, init=embeddings,
                          status_key=key)


def assemble_features(embeddings, graph, belief, agents, ego):
    """
    Feature matrix for the ego agent: embedding center vectors followed by
    the channels in FEATURE_CHANNELS.

    Parameters
    ----------
    embeddings: NodeEmbeddings
    graph: UncertainGraph
    belief: BeliefState
    agents: sequence of AgentSpec
    ego: agent id

    Returns
    -------
    FeatureMatrix
    """
    agents = list(agents)
    by_id = {agent.id: agent for agent in agents}
    if ego not in by_id:
        raise InputError('ego {0!r} is not one of the agents'.format(ego))
    if embeddings.nodes != graph.nodes:
        raise ConfigurationError('embeddings do not cover the graph nodes')
    for agent in agents:
        position = belief.positions.get(agent.id)
        if position not in graph.index:
            raise InputError('agent {0} is at unknown node {1!r}'
                             .format(agent.id, position))
    n_nodes = len(graph.nodes)
    channels = np.zeros((n_nodes, len(FEATURE_CHANNELS)))
    me = by_id[ego]
    channels[graph.index[belief.positions[ego]], 0] = 1.0
    channels[graph.index[me.destination], 1] = 1.0
    for agent in agents:
        if agent.id != ego and belief.is_active(agent.id):
            channels[graph.index[agent.destination], 2] = 1.0
    channels[:, 3] = max(0.0, (me.budget - belief.spent[ego]) / me.budget)
    channels[:, 4] = graphs.node_entropy(graph, belief)
    return FeatureMatrix(np.hstack([embeddings.center, channels]),
                         FEATURE_CHANNELS)


def save_embeddings(embeddings, path):
    """
    Write embeddings as text: a header line, one line per node of the form
    'node v_1 ... v_d' for the center vectors, then a '# context' line and
    the context vectors in the same layout.
    """
    lines = ['{0} {1} {2}'.format(EMBEDDING_HEADER, len(embeddings.nodes),
                                  embeddings.dim)]
    for name, matrix in (('center', embeddings.center),
                         ('context', embeddings.context)):
        if name == 'context':
            lines.append('# context')
        for node, row in zip(embeddings.nodes, matrix):
            lines.append(' '.join([str(node)] +
                                  ['%.17g' % value for value in row]))
    with open(path, 'w') as out_file:
        out_file.write('\n'.join(lines) + '\n')


def load_embeddings(path, node_type=int):
    """Read embeddings written by save_embeddings."""
    with open(path) as in_file:
        lines = in_file.read().splitlines()
    if not lines or not lines[0].startswith(EMBEDDING_HEADER):
        raise DataError('missing embeddings header', path=path, line=1)
    try:
        n_nodes, dim = (int(val) for val in lines[0].split()[2:4])
    except ValueError:
        raise DataError('bad embeddings header', path=path, line=1)
    nodes = []
    rows = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith('# context'):
            continue
        parts = line.split()
        if len(parts) != dim + 1:
            raise DataError('expected {0} values, found {1}'.format(
                dim + 1, len(parts)), path=path, line=number)
        try:
            nodes.append(node_type(parts[0]))
            rows.append([float(val) for val in parts[1:]])
        except ValueError as err:
            raise DataError(str(err), path=path, line=number)
    if len(rows) != 2 * n_nodes:
        raise DataError('expected {0} rows, found {1}'.format(
            2 * n_nodes, len(rows)), path=path)
    rows = np.asarray(rows)
    return NodeEmbeddings(rows[:n_nodes], rows[n_nodes:], nodes[:n_nodes])
