#!/usr/bin/env python
"""
Multi-head graph attention policy with exact analytic gradients.

Each layer computes, for every head k,

    z_j = W^k h_j
    e_ij = a^k_1 . z_i + a^k_2 . z_j
    alpha_ij = softmax over j in N_i of LeakyReLU(e_ij)
    h'_i = ELU(sum_j alpha_ij z_j)

and concatenates the heads. N_i holds i itself and every successor of i
along an edge which is not Blocked. The action logits at the current node c
are the dot products h_c . h_j of the final representations over the
candidate successors j, and the policy is their softmax.

Arrays use node-major layouts: z has shape (n_nodes, heads, head_dim) and
per-edge quantities have shape (n_edges, heads).
"""

import collections
import json
import numpy as np
import scipy.special
import marvelnav.embedding as embedding
import marvelnav.maths_functions as mf
import marvelnav.settings
from marvelnav.errors import ConfigurationError, DeadEndError, InvariantError

LEAKY_SLOPE = 0.2
CHECKPOINT_FORMAT = 'marvelnav-gat'
CHECKPOINT_VERSION = 1


class GatParams(object):

    """
    Learnable weights of every attention layer.

    Parameters
    ----------
    weights: list of 3d numpy arrays
        Layer l has shape (heads, out_l, in_l) with in_0 the feature width
        and in_l = heads * out_{l-1} afterwards.
    attention: list of 3d numpy arrays
        Layer l has shape (heads, 2, out_l); [k, 0] multiplies the attending
        node and [k, 1] its neighbour.
    version: int, optional
        Incremented by every in-place update.
    """

    def __init__(self, weights, attention, version=0):
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.attention = [np.array(a, dtype=float) for a in attention]
        self.version = version
        if len(self.weights) != len(self.attention) or not self.weights:
            raise ConfigurationError('need one attention vector per layer')
        heads = self.weights[0].shape[0]
        in_dim = self.weights[0].shape[2]
        for layer, (weight, attn) in enumerate(zip(self.weights,
                                                   self.attention)):
            if weight.ndim != 3 or weight.shape[0] != heads:
                raise ConfigurationError(
                    'layer {0} weight has shape {1}'.format(layer,
                                                            weight.shape))
            if weight.shape[2] != in_dim:
                raise ConfigurationError(
                    'layer {0} expects input width {1}, previous layer '
                    'gives {2}'.format(layer, weight.shape[2], in_dim))
            if attn.shape != (heads, 2, weight.shape[1]):
                raise ConfigurationError(
                    'layer {0} attention has shape {1}'.format(layer,
                                                               attn.shape))
            in_dim = heads * weight.shape[1]

    @property
    def heads(self):
        return self.weights[0].shape[0]

    @property
    def layers(self):
        return len(self.weights)

    @property
    def in_dim(self):
        return self.weights[0].shape[2]

    @property
    def dims(self):
        """Input width followed by each layer's per-head output width."""
        return [self.in_dim] + [w.shape[1] for w in self.weights]

    @property
    def out_dim(self):
        return self.heads * self.weights[-1].shape[1]

    def arrays(self):
        """All parameter arrays in flattening order."""
        return [arr for pair in zip(self.weights, self.attention)
                for arr in pair]

    def flatten(self):
        return np.concatenate([arr.ravel() for arr in self.arrays()])

    def n_params(self):
        return sum(arr.size for arr in self.arrays())

    def set_flat(self, flat):
        """Overwrite all parameters in place and bump the version."""
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params(),):
            raise ConfigurationError('expected {0} parameters, got {1}'
                                     .format(self.n_params(), flat.shape))
        start = 0
        for arr in self.arrays():
            arr[...] = flat[start:start + arr.size].reshape(arr.shape)
            start += arr.size
        self.version += 1

    def zeros_like(self):
        return GatParams([np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(a) for a in self.attention])

    def copy(self):
        return GatParams(self.weights, self.attention, version=self.version)

    def all_finite(self):
        return all(np.all(np.isfinite(arr)) for arr in self.arrays())


def init_params(dims, heads, rng_seed=0):
    """
    Glorot uniform initialisation: every entry is drawn uniformly from
    [-s, s] with s = sqrt(6 / (fan_in + fan_out)).

    Parameters
    ----------
    dims: list of ints
        Feature width followed by the per-head output width of each layer,
        so the number of layers is len(dims) - 1.
    heads: int
    rng_seed: int, optional

    Returns
    -------
    GatParams
    """
    if len(dims) < 2 or min(dims) < 1 or heads < 1:
        raise ConfigurationError('invalid dimensions {0} with {1} heads'
                                 .format(dims, heads))
    rng = np.random.default_rng(rng_seed)
    weights = []
    attention = []
    fan_in = dims[0]
    for out_dim in dims[1:]:
        bound = mf.glorot_bound(fan_in, out_dim)
        weights.append(rng.uniform(-bound, bound,
                                   size=(heads, out_dim, fan_in)))
        bound = mf.glorot_bound(2 * out_dim, 1)
        attention.append(rng.uniform(-bound, bound, size=(heads, 2,
                                                           out_dim)))
        fan_in = heads * out_dim
    return GatParams(weights, attention)


def settings_dims(settings):
    """Layer dimensions implied by a MarvelSettings object."""
    return [settings.feature_dim] + [settings.head_dim] * settings.layers


class ForwardCache(object):

    """
    Intermediate values of one forward pass, needed for backpropagation.

    Attributes
    ----------
    layers: list of dicts
        Per layer: input 'x', transformed features 'z', attention logits
        'e', normalised coefficients 'alpha' and pre-activation sums 'agg'.
    src, dst: 1d numpy arrays
        Neighbourhood index pairs (node src attends to node dst).
    """

    def __init__(self, layers, src, dst, n_nodes, attention, params):
        self.layers = layers
        self.src = src
        self.dst = dst
        self.n_nodes = n_nodes
        self.attention = attention
        self.params_id = id(params)
        self.version = params.version

    def alpha_row_sums(self, layer=0):
        """Sum of alpha over each node's neighbourhood, per head."""
        sums = np.zeros((self.n_nodes, self.layers[layer]['alpha'].shape[1]))
        np.add.at(sums, self.src, self.layers[layer]['alpha'])
        return sums


def _layer_forward(weight, attn, x, src, dst, n_nodes, attention):
    """One multi-head attention layer; returns output and cache dict."""
    heads = weight.shape[0]
    z = np.einsum('ni,koi->nko', x, weight)
    s_src = np.einsum('nko,ko->nk', z, attn[:, 0])
    s_dst = np.einsum('nko,ko->nk', z, attn[:, 1])
    e = s_src[src] + s_dst[dst]
    if attention:
        alpha = mf.segment_softmax(mf.leaky_relu(e, LEAKY_SLOPE), src,
                                   n_nodes)
    else:
        degree = np.bincount(src, minlength=n_nodes).astype(float)
        alpha = np.repeat((1.0 / degree[src])[:, None], heads, axis=1)
    agg = np.zeros_like(z)
    np.add.at(agg, src, alpha[:, :, None] * z[dst])
    out = mf.elu(agg).reshape(n_nodes, -1)
    return out, {'x': x, 'z': z, 'e': e, 'alpha': alpha, 'agg': agg}


def _layer_backward(weight, attn, cache, grad_out, src, dst, attention):
    """Gradients of one layer with respect to W, a and the layer input."""
    z = cache['z']
    alpha = cache['alpha']
    n_nodes, heads, _ = z.shape
    d_agg = grad_out.reshape(z.shape) * mf.elu_grad(cache['agg'])
    d_z = np.zeros_like(z)
    np.add.at(d_z, dst, alpha[:, :, None] * d_agg[src])
    d_attn = np.zeros_like(attn)
    if attention:
        d_alpha = np.einsum('eko,eko->ek', d_agg[src], z[dst])
        seg = np.zeros((n_nodes, heads))
        np.add.at(seg, src, alpha * d_alpha)
        d_e = (alpha * (d_alpha - seg[src])
               * mf.leaky_relu_grad(cache['e'], LEAKY_SLOPE))
        d_s_src = np.zeros((n_nodes, heads))
        np.add.at(d_s_src, src, d_e)
        d_s_dst = np.zeros((n_nodes, heads))
        np.add.at(d_s_dst, dst, d_e)
        d_z += (d_s_src[:, :, None] * attn[None, :, 0, :]
                + d_s_dst[:, :, None] * attn[None, :, 1, :])
        d_attn[:, 0] = np.einsum('nk,nko->ko', d_s_src, z)
        d_attn[:, 1] = np.einsum('nk,nko->ko', d_s_dst, z)
    d_weight = np.einsum('nko,ni->koi', d_z, cache['x'])
    d_x = np.einsum('nko,koi->ni', d_z, weight)
    return d_weight, d_attn, d_x


def gat_forward_arrays(params, x, src, dst, n_nodes, attention=True):
    """
    Forward pass on raw arrays.

    Parameters
    ----------
    params: GatParams
    x: 2d numpy array
        Node features, shape (n_nodes, params.in_dim).
    src, dst: 1d numpy arrays of ints
        Node src[e] attends to node dst[e]; every node must appear in src.
    n_nodes: int
    attention: bool, optional
        If False use uniform coefficients 1 / |N_i|.

    Returns
    -------
    reprs: 2d numpy array
        Shape (n_nodes, params.out_dim).
    ForwardCache
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (n_nodes, params.in_dim):
        raise ConfigurationError(
            'features have shape {0}, expected {1}'.format(
                x.shape, (n_nodes, params.in_dim)))
    layers = []
    out = x
    for weight, attn in zip(params.weights, params.attention):
        out, cache = _layer_forward(weight, attn, out, src, dst, n_nodes,
                                    attention)
        layers.append(cache)
    return out, ForwardCache(layers, src, dst, n_nodes, attention, params)


def gat_forward(params, features, graph, belief, attention=True):
    """
    Forward pass over a graph under a belief: neighbourhoods are self loops
    plus all edges which are not Blocked.

    Parameters
    ----------
    params: GatParams
    features: FeatureMatrix or 2d numpy array
    graph: UncertainGraph
    belief: BeliefState
    attention: bool, optional

    Returns
    -------
    reprs: 2d numpy array
    ForwardCache
    """
    if isinstance(features, embedding.FeatureMatrix):
        features = features.values
    src, dst = graph.neighbourhood_arrays(belief)
    return gat_forward_arrays(params, features, src, dst, len(graph.nodes),
                              attention=attention)


def gat_backward(params, cache, grad_reprs):
    """
    Backpropagate a gradient with respect to the final node representations
    through every layer.

    Parameters
    ----------
    params: GatParams
        Must be the object (and version) used for the forward pass.
    cache: ForwardCache
    grad_reprs: 2d numpy array
        Same shape as the representations.

    Returns
    -------
    grads: GatParams
        Gradient of every parameter.
    grad_features: 2d numpy array
        Gradient with respect to the input features.
    """
    if cache.params_id != id(params) or cache.version != params.version:
        raise InvariantError('forward cache is stale: parameters changed '
                             'since the forward pass')
    grads = params.zeros_like()
    grad = np.asarray(grad_reprs, dtype=float)
    for layer in reversed(range(params.layers)):
        (grads.weights[layer], grads.attention[layer],
         grad) = _layer_backward(
             params.weights[layer], params.attention[layer],
             cache.layers[layer], grad, cache.src, cache.dst,
             cache.attention)
    return grads, grad


class ActionDistribution(collections.namedtuple(
        'ActionDistribution', ['node', 'candidates', 'probs', 'logits',
                               'node_index', 'head_indices'])):

    """
    Policy over the edges leaving one node.

    candidates are edge ids in increasing order; probs and logits are
    aligned with them.
    """

    __slots__ = ()

    def greedy(self):
        """Most probable edge; ties go to the lowest edge id."""
        return self.candidates[int(np.argmax(self.logits))]

    def sample(self, rng):
        return self.candidates[int(rng.choice(len(self.candidates),
                                              p=self.probs))]

    def position(self, edge_id):
        return self.candidates.index(edge_id)


def action_distribution(reprs, graph, belief, current):
    """
    Softmax over the candidate edges at current of the dot products between
    the current node's representation and each successor's.

    Raises
    ------
    DeadEndError
        If every edge leaving current is Blocked.
    """
    candidates = tuple(graph.candidate_edges(current, belief))
    if not candidates:
        raise DeadEndError('no traversable edges leave node {0}'
                           .format(current))
    node_index = graph.index[current]
    head_indices = np.asarray([graph.index[graph.edges[e].target]
                               for e in candidates], dtype=int)
    logits = reprs[head_indices] @ reprs[node_index]
    return ActionDistribution(current, candidates, mf.softmax(logits),
                              logits, node_index, head_indices)


def logits_backward(dist, reprs, grad_logits):
    """Gradient with respect to reprs of sum(grad_logits * logits)."""
    grad_reprs = np.zeros_like(reprs)
    grad_reprs[dist.node_index] += grad_logits @ reprs[dist.head_indices]
    np.add.at(grad_reprs, dist.head_indices,
              np.outer(grad_logits, reprs[dist.node_index]))
    return grad_reprs


def log_prob_grad_logits(dist, edge_id):
    """Gradient of log pi(edge) with respect to the logits."""
    grad = -dist.probs.copy()
    grad[dist.position(edge_id)] += 1.0
    return grad


def kl_grad_logits(dist, target_probs):
    """Gradient of KL(target || pi) with respect to the logits."""
    return dist.probs - np.asarray(target_probs)


def kl_divergence(target_probs, probs):
    """KL(target || probs); non-negative and zero iff the two match."""
    target_probs = np.asarray(target_probs, dtype=float)
    return float(np.sum(scipy.special.rel_entr(target_probs,
                                               np.asarray(probs))))


def backward_from_logits(params, cache, reprs, dist, grad_logits):
    """
    Exact parameter gradient of sum(grad_logits * logits), i.e. the chain
    rule from the action logits back to every weight.

    Returns
    -------
    grads: GatParams
    grad_features: 2d numpy array
    """
    return gat_backward(params, cache,
                        logits_backward(dist, reprs, grad_logits))


def log_prob_gradient(params, cache, reprs, dist, edge_id):
    """Exact gradient of log pi(edge_id | state) for every parameter."""
    return backward_from_logits(params, cache, reprs, dist,
                                log_prob_grad_logits(dist, edge_id))[0]


PolicyOutput = collections.namedtuple(
    'PolicyOutput', ['dist', 'reprs', 'cache', 'features'])


class GatPolicy(object):

    """
    Attention policy together with its embedding pipeline.

    Embeddings are trained once for the prior belief of each (graph,
    destinations) pair and refreshed from there for every other belief, so
    the features of a belief do not depend on which beliefs were seen
    before.

    Parameters
    ----------
    params: GatParams
    settings: MarvelSettings
    greedy: bool, optional
        act picks the most probable edge when True and samples otherwise.
    cache_size: int, optional
        Maximum number of refreshed (non-prior) embeddings kept; the least
        recently used is dropped first.
    """

    def __init__(self, params, settings, greedy=True, cache_size=256):
        if params.dims != settings_dims(settings) or (
                params.heads != settings.heads):
            raise ConfigurationError(
                'parameters have dims {0} x {1} heads, settings need {2} x '
                '{3} heads'.format(params.dims, params.heads,
                                   settings_dims(settings), settings.heads))
        if cache_size < 1:
            raise ConfigurationError('cache_size must be >= 1, got {0}'
                                     .format(cache_size))
        self.params = params
        self.settings = settings
        self.greedy = greedy
        self.cache_size = cache_size
        # (graph, destinations) -> prior belief embeddings
        self._root_cache = {}
        # (graph, destinations, status key) -> refreshed embeddings, LRU
        self._embedding_cache = collections.OrderedDict()

    @property
    def n_cached_embeddings(self):
        """Number of refreshed embeddings currently held."""
        return len(self._embedding_cache)

    @classmethod
    def initialise(cls, settings, greedy=True):
        """New policy with freshly initialised parameters."""
        return cls(init_params(settings_dims(settings), settings.heads,
                               rng_seed=settings.seed),
                   settings, greedy=greedy)

    def _root_embeddings(self, graph, destinations):
        prior = graph.prior_belief()
        if self.settings.embedding_method == 'node2vec':
            corpus = embedding.random_walk_corpus(
                graph, prior, np.random.default_rng(self.settings.seed))
        else:
            corpus = embedding.build_corpus(graph, prior, destinations)
        return embedding.train_skipgram(
            corpus, self.settings.embed_dim, window=self.settings.window,
            epochs=self.settings.embed_epochs, lr=self.settings.embed_lr,
            rng_seed=self.settings.seed, status_key=prior.status_key())

    def embeddings(self, graph, belief, destinations):
        """
        Node embeddings for a belief. Refreshed embeddings are cached by
        edge statuses, keeping at most cache_size of them.
        """
        destinations = tuple(sorted(set(destinations)))
        root_key = (graph.signature_hash, destinations)
        if root_key not in self._root_cache:
            self._root_cache[root_key] = self._root_embeddings(graph,
                                                               destinations)
        root = self._root_cache[root_key]
        status_key = belief.status_key()
        if status_key == graph.prior_belief().status_key():
            return root
        key = root_key + (status_key,)
        try:
            self._embedding_cache.move_to_end(key)
            return self._embedding_cache[key]
        except KeyError:
            pass
        if self.settings.embedding_method == 'node2vec':
            emb = root
        else:
            emb = embedding.refresh(
                root, graph, belief, destinations,
                epochs=self.settings.refresh_epochs,
                window=self.settings.window, lr=self.settings.embed_lr)
        self._embedding_cache[key] = emb
        while len(self._embedding_cache) > self.cache_size:
            self._embedding_cache.popitem(last=False)
        return emb

    def distribution(self, scenario, belief, agent_id):
        """
        Action distribution of an agent together with everything needed to
        backpropagate through it.

        Returns
        -------
        PolicyOutput
        """
        graph = scenario.graph
        emb = self.embeddings(graph, belief, scenario.destinations)
        features = embedding.assemble_features(emb, graph, belief,
                                               scenario.agents, agent_id)
        reprs, cache = gat_forward(self.params, features, graph, belief,
                                   attention=self.settings.attention)
        dist = action_distribution(reprs, graph, belief,
                                   belief.positions[agent_id])
        return PolicyOutput(dist, reprs, cache, features)

    def act(self, scenario, belief, agent_id, rng=None):
        """Edge chosen by an agent (see module simulation)."""
        dist = self.distribution(scenario, belief, agent_id).dist
        if self.greedy or rng is None:
            return dist.greedy()
        return dist.sample(rng)


def save_params(params, path, **kwargs):
    """
    Write a JSON checkpoint with a dimension header and the flattened
    weights.

    Parameters
    ----------
    params: GatParams
    path: str
    attention: bool, optional
    extra: dict, optional
        Additional top-level entries (for example settings and a manifest
        hash).
    """
    attention = kwargs.pop('attention', True)
    extra = kwargs.pop('extra', {})
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    doc = {'format': CHECKPOINT_FORMAT,
           'format_version': CHECKPOINT_VERSION,
           'dims': params.dims,
           'heads': params.heads,
           'layers': params.layers,
           'attention': attention,
           'weights': params.flatten().tolist()}
    doc.update(extra)
    with open(path, 'w') as out_file:
        json.dump(doc, out_file, sort_keys=True)


def load_params(path, dims=None, heads=None):
    """
    Read a checkpoint written by save_params.

    Parameters
    ----------
    path: str
    dims: list of ints, optional
        Expected dimensions; a mismatch raises ConfigurationError.
    heads: int, optional
        Expected number of heads.

    Returns
    -------
    params: GatParams
    doc: dict
        The full checkpoint contents.
    """
    with open(path) as in_file:
        doc = json.load(in_file)
    if doc.get('format') != CHECKPOINT_FORMAT:
        raise ConfigurationError('{0} is not a policy checkpoint'
                                 .format(path))
    if doc.get('format_version') != CHECKPOINT_VERSION:
        raise ConfigurationError('unsupported checkpoint version {0}'
                                 .format(doc.get('format_version')))
    if dims is not None and list(dims) != doc['dims']:
        raise ConfigurationError('checkpoint dims {0} != expected {1}'
                                 .format(doc['dims'], list(dims)))
    if heads is not None and heads != doc['heads']:
        raise ConfigurationError('checkpoint heads {0} != expected {1}'
                                 .format(doc['heads'], heads))
    params = init_params(doc['dims'], doc['heads'])
    params.set_flat(doc['weights'])
    params.version = 0
    return params, doc


def save_policy(policy, path, manifest_hash=None):
    """Checkpoint a GatPolicy including its settings."""
    extra = {'settings': policy.settings.get_settings_dict()}
    if manifest_hash is not None:
        extra['manifest_hash'] = manifest_hash
    save_params(policy.params, path, attention=policy.settings.attention,
                extra=extra)


def load_policy(path, settings=None):
    """
    Load a GatPolicy checkpoint. If settings are given the checkpoint must
    match their dimensions; otherwise the stored settings are used.
    """
    if settings is None:
        with open(path) as in_file:
            stored = json.load(in_file).get('settings')
        if stored is None:
            raise ConfigurationError('{0} has no stored settings'
                                     .format(path))
        settings = marvelnav.settings.MarvelSettings(**stored)
    params, _ = load_params(path, dims=settings_dims(settings),
                            heads=settings.heads)
    return GatPolicy(params, settings)

