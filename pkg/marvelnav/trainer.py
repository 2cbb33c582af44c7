#!/usr/bin/env python
"""
Entropy-augmented, expert-imitating policy gradient training of the
attention policy.

After every move the moving agent's log-probability gradient is weighted by
its team weight times the on-time surrogate at the state it reached, plus
the entropy coefficient times the entropy its arrival removed. The expert
term pulls the policy towards the expert's softened one-hot target by
descending KL(target || policy). By default updates are applied online,
after every move.
"""

import collections
import os
import numpy as np
import pandas as pd
import tqdm
import marvelnav.expert as expert
import marvelnav.graphs as graphs
import marvelnav.policy as policy_net
import marvelnav.simulation as sim
from marvelnav.errors import InputError, NumericalError
from marvelnav.expert import sota_surrogate

TRAINING_STREAM = 1
LOG_COLUMNS = ['epoch', 'objective', 'lr', 'expert_agreement',
               'entropy_term']


class TrajectoryStep(collections.namedtuple(
        'TrajectoryStep', ['belief_key', 'agent', 'node', 'edge', 'log_prob',
                           'cost', 'delta_h', 'expert_edge', 'surrogate',
                           'grad_log_prob', 'grad_kl', 'kl'])):

    """
    One move made by the policy during training.

    grad_log_prob and grad_kl are flat parameter gradients of log pi(edge)
    and of KL(expert target || pi) at the decision state; expert_edge,
    grad_kl and kl are None when the expert was not consulted.
    """

    __slots__ = ()


class Trajectory(object):

    """Time-ordered moves of one training episode and their outcome."""

    def __init__(self, steps, outcome=None):
        self.steps = list(steps)
        self.outcome = outcome

    def __len__(self):
        return len(self.steps)

    @property
    def delta_h(self):
        return float(sum(step.delta_h for step in self.steps))

    def expert_agreement(self):
        """Fraction of moves matching the expert, nan if never consulted."""
        matches = [step.edge == step.expert_edge for step in self.steps
                   if step.expert_edge is not None]
        return float(np.mean(matches)) if matches else np.nan


def lr_schedule(epoch, lr=1e-3, decay=0.95, every=100):
    """Learning rate after decaying by a constant factor every few epochs."""
    return lr * decay ** (epoch // every)


def agent_surrogate(scenario, belief, agent_id, kappa=1.0):
    """
    On-time surrogate of an agent at a belief: its own arrival time if it
    has arrived, otherwise its least expected time path to the destination.
    """
    agent = scenario.agent(agent_id)
    node = belief.positions[agent_id]
    if belief.arrived[agent_id]:
        path = graphs.PathResult((node,), 0.0, 0.0, True, 0.0)
    elif belief.failed[agent_id] is not None:
        return 0.0
    else:
        path = graphs.shortest_path_expected(
            scenario.graph, belief, node, agent.destination,
            graphs.UnknownMode.EXPECTED_COST)
    return sota_surrogate(agent.budget, belief.spent[agent_id], path, kappa)


def team_objective(scenario, belief, delta_h, settings):
    """Weighted sum of the agents' surrogates plus the entropy term."""
    value = sum(agent.weight * agent_surrogate(scenario, belief, agent.id,
                                               settings.kappa)
                for agent in scenario.agents)
    if settings.entropy_term:
        value += settings.entropy_weight * delta_h
    return float(value)


def step_gradient(step, weight, settings):
    """
    Ascent direction contributed by one move.

    step.delta_h is the entropy removed by the move (H before minus H
    after, so >= 0), hence it enters with a plus sign: subtracting the
    graph entropy from the objective rewards reducing it.
    """
    reward = weight * step.surrogate
    if settings.entropy_term:
        reward += settings.entropy_weight * step.delta_h
    grad = reward * step.grad_log_prob
    if settings.expert_loss and step.grad_kl is not None:
        grad = grad - settings.expert_weight * step.grad_kl
    return grad


def compute_gradient(trajectories, scenario, settings):
    """
    Monte-Carlo estimate of the objective's gradient from M trajectories.

    Parameters
    ----------
    trajectories: list of Trajectory
    scenario: ScenarioConfig
        Supplies the agent weights.
    settings: MarvelSettings
        Ablation switches and coefficients.

    Returns
    -------
    1d numpy array
        Flat gradient in GatParams.flatten order.
    """
    if not trajectories:
        raise InputError('need at least one trajectory')
    total = None
    for trajectory in trajectories:
        for step in trajectory.steps:
            weight = scenario.agent(step.agent).weight
            grad = step_gradient(step, weight, settings)
            total = grad if total is None else total + grad
    if total is None:
        raise InputError('trajectories contain no moves')
    return total / len(trajectories)


class SGD(object):

    """Plain gradient ascent."""

    def step(self, params, grad, lr):
        params.set_flat(params.flatten() + lr * grad)


class Adam(object):

    """Adam optimiser, used for ascent."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.count = 0
        self.moment1 = None
        self.moment2 = None

    def step(self, params, grad, lr):
        if self.moment1 is None:
            self.moment1 = np.zeros_like(grad)
            self.moment2 = np.zeros_like(grad)
        self.count += 1
        self.moment1 = self.beta1 * self.moment1 + (1 - self.beta1) * grad
        self.moment2 = (self.beta2 * self.moment2 +
                        (1 - self.beta2) * grad ** 2)
        m_hat = self.moment1 / (1 - self.beta1 ** self.count)
        v_hat = self.moment2 / (1 - self.beta2 ** self.count)
        params.set_flat(params.flatten() +
                        lr * m_hat / (np.sqrt(v_hat) + self.eps))


def get_optimizer(name):
    if name == 'adam':
        return Adam()
    elif name == 'sgd':
        return SGD()
    else:
        raise InputError('unknown optimizer {0!r}'.format(name))


class _TrainingActor(object):

    """
    Samples moves from the policy and turns each resulting transition into a
    TrajectoryStep, applying online updates when asked to.
    """

    def __init__(self, policy, scenario, settings, expert_policy, optimizer,
                 lr, online):
        self.policy = policy
        self.scenario = scenario
        self.settings = settings
        self.expert = expert_policy
        self.optimizer = optimizer
        self.lr = lr
        self.online = online
        self.steps = []
        self._pending = None

    def act(self, scenario, belief, agent_id, rng):
        output = self.policy.distribution(scenario, belief, agent_id)
        decision = None
        if self.expert is not None:
            decision = self.expert.decide(scenario, belief, agent_id)
        edge_id = output.dist.sample(rng)
        self._pending = (belief, output, decision)
        return edge_id

    def on_step(self, transition):
        belief, output, decision = self._pending
        self._pending = None
        params = self.policy.params
        dist = output.dist
        grad_log_prob = policy_net.log_prob_gradient(
            params, output.cache, output.reprs, dist,
            transition.edge).flatten()
        expert_edge = grad_kl = kl = None
        if decision is not None:
            expert_edge = decision.edge
            grad_kl = policy_net.backward_from_logits(
                params, output.cache, output.reprs, dist,
                policy_net.kl_grad_logits(dist, decision.target))[0].flatten()
            kl = policy_net.kl_divergence(decision.target, dist.probs)
        step = TrajectoryStep(
            belief.status_key(), transition.agent, dist.node,
            transition.edge,
            float(np.log(dist.probs[dist.position(transition.edge)])),
            transition.cost, transition.delta_h, expert_edge,
            agent_surrogate(self.scenario, transition.belief_after,
                            transition.agent, self.settings.kappa),
            grad_log_prob, grad_kl, kl)
        self.steps.append(step)
        if self.online:
            weight = self.scenario.agent(step.agent).weight
            self.optimizer.step(params,
                                step_gradient(step, weight, self.settings),
                                self.lr)


def training_rng(seed, epoch):
    """Random generator of one training episode."""
    return np.random.default_rng([seed, TRAINING_STREAM, epoch])


def train(scenario, settings, **kwargs):
    """
    Train the attention policy on a scenario, one episode per epoch.

    Parameters
    ----------
    scenario: ScenarioConfig
    settings: MarvelSettings
    policy: GatPolicy, optional
        Policy to continue training; a new one is initialised from the
        settings otherwise.
    track_agreement: bool, optional
        Consult the expert (and log the agreement rate) even when the
        expert loss is switched off.
    checkpoint_dir: str or None, optional
        Directory for checkpoints written every settings.checkpoint_every
        epochs.
    manifest_hash: str or None, optional
        Stored in checkpoints.
    disable_tqdm: bool, optional

    Returns
    -------
    params: GatParams
    log: pandas DataFrame
        Columns epoch, objective, lr, expert_agreement and entropy_term.
    """
    settings.check()
    policy = kwargs.pop('policy', None)
    track_agreement = kwargs.pop('track_agreement', settings.expert_loss)
    checkpoint_dir = kwargs.pop('checkpoint_dir', None)
    manifest_hash = kwargs.pop('manifest_hash', None)
    disable_tqdm = kwargs.pop('disable_tqdm', False)
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    if policy is None:
        policy = policy_net.GatPolicy.initialise(settings)
    expert_policy = None
    if settings.expert_loss or track_agreement:
        expert_policy = expert.ExpertPolicy.from_settings(settings)
    optimizer = get_optimizer(settings.optimizer)
    online = settings.update_mode == 'online'
    rows = []
    for epoch in tqdm.tqdm(range(settings.epochs), disable=disable_tqdm,
                           desc='training', leave=False):
        lr = lr_schedule(epoch, settings.lr, settings.lr_decay,
                         settings.lr_decay_every)
        actor = _TrainingActor(policy, scenario, settings, expert_policy,
                               optimizer, lr, online)
        outcome = sim.run_episode(actor, scenario,
                                  rng=training_rng(settings.seed, epoch),
                                  on_step=actor.on_step)
        trajectory = Trajectory(actor.steps, outcome)
        if not online and trajectory.steps:
            optimizer.step(policy.params,
                           compute_gradient([trajectory], scenario, settings),
                           lr)
        objective = team_objective(scenario, outcome.final_belief,
                                   outcome.delta_h, settings)
        if not np.isfinite(objective) or not policy.params.all_finite():
            raise NumericalError(
                'training diverged at epoch {0}: objective={1}, finite '
                'parameters={2}, lr={3}'.format(
                    epoch, objective, policy.params.all_finite(), lr))
        rows.append({'epoch': epoch, 'objective': objective, 'lr': lr,
                     'expert_agreement': trajectory.expert_agreement(),
                     'entropy_term': outcome.delta_h})
        if (checkpoint_dir is not None and settings.checkpoint_every and
                (epoch + 1) % settings.checkpoint_every == 0):
            policy_net.save_policy(
                policy, os.path.join(checkpoint_dir, '{0}_epoch{1}.json'
                                     .format(settings.save_name(),
                                             epoch + 1)),
                manifest_hash=manifest_hash)
    log = pd.DataFrame(rows, columns=LOG_COLUMNS)
    return policy.params, log


def convergence_epoch(log, column='objective', **kwargs):
    """
    First epoch after which the moving average of a training log column
    stays within a relative band of its final value.

    Parameters
    ----------
    log: pandas DataFrame
    column: str, optional
    window: int, optional
        Moving average window.
    band: float, optional
        Relative tolerance around the final smoothed value.
    hold: int, optional
        Minimum number of epochs the smoothed value must stay in the band.

    Returns
    -------
    int or None
        None if the run has not converged.
    """
    window = kwargs.pop('window', 50)
    band = kwargs.pop('band', 0.01)
    hold = kwargs.pop('hold', 200)
    if kwargs:
        raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))
    smoothed = log[column].rolling(window, min_periods=1).mean().values
    if smoothed.shape[0] < hold:
        return None
    final = smoothed[-1]
    inside = np.abs(smoothed - final) <= band * abs(final)
    outside = np.flatnonzero(~inside)
    start = 0 if outside.shape[0] == 0 else outside[-1] + 1
    if smoothed.shape[0] - start < hold:
        return None
    return int(log['epoch'].values[start])
