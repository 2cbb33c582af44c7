#!/usr/bin/env python
"""
Defines the class which holds the settings for embedding, the policy
network and training. This includes the ablation switches (attention,
entropy term, expert loss) and the expert configuration.
"""

import copy
import hashlib
import json
from marvelnav.errors import ConfigurationError


class MarvelSettings(object):

    """
    Controls how node embeddings, the attention policy and training are
    set up.

    Parameters
    ----------
    embed_dim: int
        Skip-gram embedding dimension d.
    window: int
        Skip-gram context window m.
    embed_epochs: int
        Full-batch epochs used to train the embeddings of the prior belief.
    embed_lr: float
        Skip-gram learning rate.
    refresh_epochs: int
        Warm-start epochs used when the belief changes.
    embedding_method: str
        'shortest_path' (weighted Dijkstra chains) or 'node2vec' (random
        walk corpus, for comparison only).
    heads: int
        Attention heads K per layer.
    layers: int
        Number of attention layers L.
    head_dim: int
        Output width of each head.
    attention: bool
        If False every neighbour gets equal attention weight 1 / |N_i|.
    lr: float
        Learning rate of the policy parameters.
    lr_decay: float
        Multiplicative learning rate decay...
    lr_decay_every: int
        ...applied once every this many epochs.
    epochs: int
        Training epochs (one episode each).
    optimizer: str
        'adam' or 'sgd'.
    update_mode: str
        'online' applies an update after every step; 'episode' accumulates
        the gradient over each episode.
    expert_loss: bool
        Whether the expert imitation term is used.
    expert_weight: float
        Weight beta of the expert imitation term, in [0, 1].
    entropy_term: bool
        Whether the entropy reduction term is used.
    entropy_weight: float
        Coefficient eta of the entropy term.
    kappa: float
        Sharpness of the on-time surrogate.
    expert_mode: str
        'expectimax' or 'heuristic'.
    expert_temperature: float
        Temperature softening the expert's one-hot target.
    max_expectimax_unknown: int
        Expectimax is only used with at most this many Unknown edges...
    max_expectimax_nodes: int
        ...and at most this many nodes; otherwise the heuristic expert is
        used.
    seed: int
        Seeds parameter initialisation, embeddings and training episodes.
    checkpoint_every: int
        Save a checkpoint every this many epochs (0 disables).
    """

    __isfrozen = False

    def __init__(self, **kwargs):
        """Initialise settings object and store settings

        Parameters
        ----------
        kwargs: dict, optional
            See the class docstring for a description of the allowed settings.
        """
        default_settings = {
            # embedding settings
            # ------------------
            'embed_dim': 128,
            'window': 2,
            'embed_epochs': 100,
            'embed_lr': 0.5,
            'refresh_epochs': 10,
            'embedding_method': 'shortest_path',
            # policy network settings
            # -----------------------
            'heads': 8,
            'layers': 2,
            'head_dim': 16,
            'attention': True,
            # training settings
            # -----------------
            'lr': 1e-3,
            'lr_decay': 0.95,
            'lr_decay_every': 100,
            'epochs': 2000,
            'optimizer': 'adam',
            'update_mode': 'online',
            'expert_loss': True,
            'expert_weight': 0.5,
            'entropy_term': True,
            'entropy_weight': 1.0,
            'kappa': 1.0,
            # expert settings
            # ---------------
            'expert_mode': 'expectimax',
            'expert_temperature': 0.1,
            'max_expectimax_unknown': 8,
            'max_expectimax_nodes': 30,
            'seed': 0,
            'checkpoint_every': 0
        }
        for (setting_name, default_value) in default_settings.items():
            setattr(self, setting_name,
                    kwargs.pop(setting_name, default_value))
        if kwargs:
            raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
        # prevent more settings from being added later
        self.__isfrozen = True

    def __setattr__(self, key, value):
        """
        Freeze the class to prevent unexpected settings from being accidentally
        added.

        Parameters
        ----------
        key: str
            Name of attribute
        value: any type
            Value of attribute
        """
        if self.__isfrozen and not hasattr(self, key):
            raise TypeError('Frozen MarvelSettings instance given ' +
                            'unexpected attribute: %r' % key)
        object.__setattr__(self, key, value)

    @property
    def feature_dim(self):
        """Width of the feature matrix fed to the first attention layer."""
        # embedding columns plus five positional channels
        return self.embed_dim + 5

    def check(self):
        """
        Raise ConfigurationError if any setting has an invalid value.

        Returns
        -------
        self
        """
        positive_ints = ['embed_dim', 'window', 'heads', 'layers',
                         'head_dim', 'lr_decay_every']
        for name in positive_ints:
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigurationError(
                    '{0} must be a positive integer, got {1!r}'.format(
                        name, value))
        for name in ['embed_epochs', 'refresh_epochs', 'epochs',
                     'checkpoint_every']:
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ConfigurationError(
                    '{0} must be a non-negative integer, got {1!r}'.format(
                        name, value))
        for name in ['lr', 'embed_lr', 'kappa', 'expert_temperature']:
            if not getattr(self, name) > 0:
                raise ConfigurationError('{0} must be > 0, got {1!r}'.format(
                    name, getattr(self, name)))
        if not 0 < self.lr_decay <= 1:
            raise ConfigurationError('lr_decay must be in (0, 1]')
        if not 0 <= self.expert_weight <= 1:
            raise ConfigurationError('expert_weight must be in [0, 1]')
        if not self.entropy_weight >= 0:
            raise ConfigurationError('entropy_weight must be >= 0')
        choices = {'embedding_method': ('shortest_path', 'node2vec'),
                   'optimizer': ('adam', 'sgd'),
                   'update_mode': ('online', 'episode'),
                   'expert_mode': ('expectimax', 'heuristic')}
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigurationError('{0} must be one of {1}, got {2!r}'
                                         .format(name, allowed,
                                                 getattr(self, name)))
        return self

    def get_settings_dict(self):
        """
        Returns a dictionary containing settings information (without the
        private freeze flag) which can be saved with pickle or JSON.

        Returns
        -------
        settings_dict: dict
        """
        return {key: copy.deepcopy(value) for key, value
                in self.__dict__.items() if not key.startswith('_')}

    def config_hash(self):
        """SHA-256 hex digest of the settings, stable across runs."""
        blob = json.dumps(self.get_settings_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode('utf-8')).hexdigest()

    def save_name(self, include_seed=True):
        """
        Make a standard save name format for a given settings configuration.

        Parameters
        ----------
        include_seed: bool, optional
            Whether or not to include the seed in save_name.

        Returns
        -------
        save_name: str
        """
        save_name = '{0}d_{1}h{2}x{3}'.format(
            self.embed_dim, self.heads, self.layers, self.head_dim)
        if self.embedding_method != 'shortest_path':
            save_name += '_' + self.embedding_method
        if not self.attention:
            save_name += '_noatt'
        if not self.entropy_term:
            save_name += '_noent'
        elif self.entropy_weight != 1:
            save_name += '_eta' + str(self.entropy_weight)
        if not self.expert_loss:
            save_name += '_noexp'
        else:
            save_name += '_beta' + str(self.expert_weight)
            save_name += '_' + self.expert_mode
        save_name += '_' + self.optimizer + str(self.lr)
        if self.update_mode != 'online':
            save_name += '_' + self.update_mode
        save_name += '_' + str(self.epochs) + 'epochs'
        if include_seed:
            save_name += '_seed' + str(self.seed)
        save_name = save_name.replace('.', '_')
        save_name = save_name.replace('-', '_')
        return save_name
