#!/usr/bin/env python
"""
Test the marvelnav package installation.

Set the environment variable MARVELNAV_SLOW_TESTS to also run the longer
Monte-Carlo checks.
"""

import json
import os
import shutil
import unittest
import unittest.mock
import warnings
import numpy as np
import numpy.testing
import pandas as pd
import networkx as nx
import scipy.special
import scipy.stats
import matplotlib
matplotlib.use('Agg')
import matplotlib.figure
import hypothesis
import hypothesis.strategies as st
import marvelnav.cli as cli
import marvelnav.data_io as data_io
import marvelnav.embedding as embedding
import marvelnav.evaluation as evaluation
import marvelnav.expert as expert
import marvelnav.graphs as graphs
import marvelnav.maths_functions as mf
import marvelnav.networks as networks
import marvelnav.plots
import marvelnav.policy as policy_net
import marvelnav.results_tables as rt
import marvelnav.settings
import marvelnav.simulation as sim
import marvelnav.trainer as trainer
from marvelnav.errors import (ConfigurationError, ContractError, DataError,
                              DeadEndError, InputError, InvariantError,
                              NumericalError, UnreachableError)

TEST_CACHE_DIR = 'cache_tests'
TEST_DIR_EXISTS_MSG = ('Directory ' + TEST_CACHE_DIR + ' exists! Tests use '
                       'this dir to check caching then delete it afterwards, '
                       'so the path should be left empty.')
SLOW_TESTS = bool(os.environ.get('MARVELNAV_SLOW_TESTS'))
LN2 = np.log(2)


class CacheDirTestCase(unittest.TestCase):

    """Test case writing its files to TEST_CACHE_DIR."""

    def setUp(self):
        """Check TEST_CACHE_DIR does not already exist."""
        assert not os.path.exists(TEST_CACHE_DIR), TEST_DIR_EXISTS_MSG
        os.makedirs(TEST_CACHE_DIR)

    def tearDown(self):
        """Remove any caches created by the tests."""
        try:
            shutil.rmtree(TEST_CACHE_DIR)
        except FileNotFoundError:
            pass


class TestMathsFunctions(unittest.TestCase):

    def test_binary_entropy(self):
        self.assertAlmostEqual(mf.binary_entropy(0.5), LN2)
        self.assertEqual(mf.binary_entropy(1.0), 0)
        self.assertEqual(mf.binary_entropy(0.0), 0)
        numpy.testing.assert_allclose(mf.binary_entropy([0.5, 1.0]),
                                      [LN2, 0])

    @hypothesis.given(st.floats(min_value=0, max_value=1))
    def test_binary_entropy_range(self, p_open):
        ent = mf.binary_entropy(p_open)
        self.assertGreaterEqual(ent, 0)
        self.assertLessEqual(ent, LN2 + 1e-12)
        self.assertAlmostEqual(ent, mf.binary_entropy(1 - p_open))

    @hypothesis.given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_segment_softmax_sums_to_one(self, seed):
        rng = np.random.default_rng(seed)
        segments = np.concatenate([np.arange(4),
                                   rng.integers(4, size=6)])
        values = rng.normal(scale=5, size=(10, 3))
        probs = mf.segment_softmax(values, segments, 4)
        sums = np.zeros((4, 3))
        np.add.at(sums, segments, probs)
        numpy.testing.assert_allclose(sums, 1.0)

    def test_on_time_probability(self):
        self.assertAlmostEqual(mf.on_time_probability(5.0, 5.0, 4.0), 0.5)
        self.assertAlmostEqual(
            mf.on_time_probability(7.0, 5.0, 4.0, eps=0),
            scipy.stats.norm.cdf(1.0))

    def test_truncated_gaussian_samples(self):
        rng = np.random.default_rng(0)
        samples = mf.truncated_gaussian_samples(10.0, 4.0, 10 ** 6, rng)
        self.assertEqual(samples.shape, (10 ** 6,))
        self.assertGreaterEqual(samples.min(), 5.0)
        mean, std = mf.truncated_normal_moments(10.0, 4.0)
        self.assertLess(abs(samples.mean() - mean),
                        3 * std / np.sqrt(samples.shape[0]))
        numpy.testing.assert_array_equal(
            mf.truncated_gaussian_samples(2.0, 0, 3, rng), [2.0] * 3)

    @hypothesis.settings(max_examples=20, deadline=None)
    @hypothesis.given(st.floats(min_value=0.5, max_value=20),
                      st.floats(min_value=0.01, max_value=10),
                      st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_truncated_gaussian_floor(self, mu, sigma, seed):
        samples = mf.truncated_gaussian_samples(
            mu, sigma, 1000, np.random.default_rng(seed))
        self.assertEqual(samples.shape, (1000,))
        self.assertGreaterEqual(samples.min(), 0.5 * mu)

    def test_truncated_gaussian_sample(self):
        rng = np.random.default_rng(1)
        draws = [mf.truncated_gaussian_sample(1.0, 2.0, rng)
                 for _ in range(200)]
        self.assertGreaterEqual(min(draws), 0.5)
        draws = [mf.truncated_gaussian_sample(1.0, 2.0, rng, truncate=False)
                 for _ in range(200)]
        self.assertLess(min(draws), 0.5)


class TestGraphs(unittest.TestCase):

    def setUp(self):
        self.graph = networks.toy_network()
        self.uncertain = self.graph.edge_between(13, 4).id

    def test_edge_validation(self):
        self.assertRaises(InputError, graphs.EdgeAttr, 0, 1, 2, 0.0)
        self.assertRaises(InputError, graphs.EdgeAttr, 0, 1, 2, 1.0, -1.0)
        self.assertRaises(InputError, graphs.EdgeAttr, 0, 1, 2, 1.0, 0.0,
                          0.0)
        self.assertRaises(InputError, graphs.EdgeAttr, 0, 1, 1, 1.0)
        self.assertTrue(graphs.EdgeAttr(0, 1, 2, 1.0).certain)

    def test_graph_validation(self):
        self.assertRaises(InputError, graphs.UncertainGraph.from_edge_list,
                          [(0, 1, 1.0, 0.0, 1.0), (0, 1, 2.0, 0.0, 1.0)])
        edge = graphs.EdgeAttr(1, 0, 1, 1.0)
        self.assertRaises(InputError, graphs.UncertainGraph, [0, 1], [edge])
        edge = graphs.EdgeAttr(0, 0, 5, 1.0)
        self.assertRaises(InputError, graphs.UncertainGraph, [0, 1], [edge])

    def test_graph_entropy_and_reveal(self):
        prior = self.graph.prior_belief()
        self.assertAlmostEqual(graphs.graph_entropy(self.graph, prior), LN2)
        after = graphs.reveal_edges_at(self.graph, prior, 13,
                                       {self.uncertain: False})
        self.assertIs(after.status_of(self.uncertain),
                      graphs.EdgeStatus.BLOCKED)
        self.assertEqual(graphs.graph_entropy(self.graph, after), 0)
        self.assertAlmostEqual(
            graphs.entropy_delta(self.graph, prior, after), LN2)
        # nothing left to reveal
        self.assertIs(graphs.reveal_edges_at(self.graph, after, 13,
                                             lambda edge_id: True), after)

    def test_entropy_delta_rejects_forgetting(self):
        prior = self.graph.prior_belief()
        opened = prior.with_status({self.uncertain:
                                    graphs.EdgeStatus.OPEN})
        self.assertRaises(InvariantError, graphs.entropy_delta, self.graph,
                          opened, prior)

    def test_with_status_rejects_certain_edge(self):
        self.assertRaises(InvariantError,
                          self.graph.prior_belief().with_status,
                          {0: graphs.EdgeStatus.BLOCKED})

    def test_negative_spent_time(self):
        self.assertRaises(InvariantError, graphs.BeliefState, {}, {'a': 1},
                          {'a': -1.0})

    def test_shortest_path_expected(self):
        path = graphs.shortest_path_expected(self.graph, None, 3, 8)
        self.assertEqual(path.node_seq, (3, 14, 13, 4, 8))
        self.assertAlmostEqual(path.mu_total, 6.5)
        self.assertAlmostEqual(path.expected_cost, 8.0)
        self.assertAlmostEqual(path.var_total, 0.1075)
        path = graphs.shortest_path_expected(self.graph, None, 3, 8,
                                             graphs.UnknownMode.EXCLUDE)
        self.assertEqual(path.node_seq, (3, 5, 6, 7, 8))
        self.assertAlmostEqual(path.var_total, 0.1825)
        blocked = self.graph.prior_belief().with_status(
            {self.uncertain: graphs.EdgeStatus.BLOCKED})
        path = graphs.shortest_path_expected(self.graph, blocked, 3, 8)
        self.assertEqual(path.node_seq, (3, 5, 6, 7, 8))

    def test_shortest_path_matches_enumeration(self):
        graph = networks.random_network(8, np.random.default_rng(3),
                                        chord_prob=0.4, uncertain_prob=0.5)
        prior = graph.prior_belief()
        for src, dst in [(0, 5), (2, 7), (6, 1)]:
            costs = []
            for node_seq in nx.all_simple_paths(graph.digraph, src, dst):
                edges = [graph.edge_between(u, v)
                         for u, v in zip(node_seq[:-1], node_seq[1:])]
                costs.append(sum(edge.mu / edge.p_open for edge in edges))
            path = graphs.shortest_path_expected(graph, prior, src, dst)
            self.assertAlmostEqual(path.expected_cost, min(costs))
        path = graphs.shortest_path_expected(graph, prior, 4, 4)
        self.assertEqual(path.node_seq, (4,))
        self.assertEqual((path.mu_total, path.var_total), (0, 0))
        self.assertTrue(path.reachable)

    def test_shortest_paths_to(self):
        prior = self.graph.prior_belief()
        paths = graphs.shortest_paths_to(self.graph, prior, 8)
        self.assertNotIn(12, paths)
        for node, path in paths.items():
            self.assertEqual(path.node_seq[0], node)
            self.assertEqual(path.node_seq[-1], 8)
            single = graphs.shortest_path_expected(self.graph, prior, node,
                                                   8)
            self.assertAlmostEqual(path.expected_cost, single.expected_cost)

    def test_unreachable(self):
        self.assertFalse(graphs.shortest_path_expected(
            self.graph, None, 8, 1).reachable)
        self.assertRaises(UnreachableError, graphs.least_expected_time,
                          self.graph, 8, 1)
        self.assertRaises(InputError, graphs.shortest_path_expected,
                          self.graph, None, 99, 1)

    def test_node_entropy(self):
        ent = graphs.node_entropy(self.graph, self.graph.prior_belief())
        self.assertAlmostEqual(ent[self.graph.index[13]], LN2)
        self.assertAlmostEqual(ent.sum(), LN2)

    def test_neighbourhood_arrays(self):
        prior = self.graph.prior_belief()
        src, dst = self.graph.neighbourhood_arrays(prior)
        self.assertEqual(src.shape[0], 14 + len(self.graph.edges))
        numpy.testing.assert_array_equal(src[:14], np.arange(14))
        blocked = prior.with_status({self.uncertain:
                                     graphs.EdgeStatus.BLOCKED})
        src, dst = self.graph.neighbourhood_arrays(blocked)
        self.assertEqual(src.shape[0], 13 + len(self.graph.edges))
        self.assertEqual(self.graph.candidate_edges(13, blocked),
                         [e for e in self.graph.out_adjacency[13]
                          if e != self.uncertain])


class TestSimulation(unittest.TestCase):

    def setUp(self):
        self.scenario = networks.toy_scenario(2)
        self.graph = self.scenario.graph
        self.uncertain = self.graph.edge_between(13, 4).id

    def test_agent_spec_validation(self):
        self.assertRaises(InputError, sim.AgentSpec, 'a', 1, 1, 5.0)
        self.assertRaises(InputError, sim.AgentSpec, 'a', 1, 2, 0.0)

    def test_scenario_validation(self):
        agents = networks.toy_agents((0.5, 0.6))
        self.assertRaises(ConfigurationError, sim.ScenarioConfig, self.graph,
                          agents)
        agents = [sim.AgentSpec('A', 9, 12, 7.0, 0.5)] * 2
        self.assertRaises(ConfigurationError, sim.ScenarioConfig, self.graph,
                          agents)
        self.assertRaises(ConfigurationError, sim.ScenarioConfig, self.graph,
                          [])
        self.assertRaises(TypeError, sim.ScenarioConfig, self.graph,
                          networks.toy_agents(), unexpected=1)
        self.assertRaises(InputError, self.scenario.agent, 'C')

    def test_from_od_pairs(self):
        scenario = sim.ScenarioConfig.from_od_pairs(
            self.graph, [(9, 12), (1, 8)], [0.4, 0.6], 1.1)
        numpy.testing.assert_allclose([a.budget for a in scenario.agents],
                                      [6.6, 1.1 * 11.5])
        self.assertEqual(scenario.multipliers, [1.1, 1.1])
        numpy.testing.assert_allclose(
            scenario.with_weights([1, 3]).weights, [0.25, 0.75])

    def test_episode_entropy_accounting(self):
        policy = evaluation.let_baseline_policy(self.graph)
        for seed in range(5):
            outcome = sim.run_episode(policy, self.scenario,
                                      rng=np.random.default_rng(seed))
            self.assertAlmostEqual(
                outcome.delta_h, sum(t.delta_h for t in outcome.transitions))
            self.assertIn(round(outcome.delta_h, 12), (0, round(LN2, 12)))
            self.assertEqual(outcome.route('A'), [9, 10, 11, 12])
            for trans in outcome.transitions:
                self.assertGreaterEqual(
                    trans.cost, 0.5 * self.graph.edges[trans.edge].mu)

    def test_episode_is_deterministic(self):
        policy = evaluation.let_baseline_policy(self.graph)
        records = [sim.run_episode(policy, self.scenario,
                                   rng=evaluation.episode_rng(3, 1))
                   .to_records() for _ in range(2)]
        self.assertEqual(records[0], records[1])

    def test_step_contract_errors(self):
        truth = sim.GroundTruth(self.graph, {self.uncertain: False}, 0)
        belief = graphs.initial_belief(self.graph, self.scenario.agents)
        # edge does not start at the agent's node
        self.assertRaises(ContractError, sim.step, self.scenario, belief,
                          'A', self.graph.edge_between(11, 12).id, truth)
        at_13 = belief.with_agent('A', position=13)
        # unknown edge
        self.assertRaises(ContractError, sim.step, self.scenario, at_13,
                          'A', self.uncertain, truth)
        blocked = at_13.with_status({self.uncertain:
                                     graphs.EdgeStatus.BLOCKED})
        self.assertRaises(ContractError, sim.step, self.scenario, blocked,
                          'A', self.uncertain, truth)
        finished = belief.with_agent('A', arrived=True)
        self.assertRaises(ContractError, sim.step, self.scenario, finished,
                          'A', self.graph.edge_between(9, 10).id, truth)
        self.assertRaises(InputError, sim.step, self.scenario, belief, 'A',
                          999, truth)

    def test_step_reveals_to_team(self):
        truth = sim.GroundTruth(self.graph, {self.uncertain: True}, 0)
        belief = graphs.initial_belief(self.graph, self.scenario.agents)
        belief = belief.with_agent('A', position=10, spent=2.0)
        trans = sim.step(self.scenario, belief, 'A',
                         self.graph.edge_between(10, 13).id, truth)
        self.assertEqual(trans.revealed, (self.uncertain,))
        self.assertAlmostEqual(trans.delta_h, LN2)
        self.assertIs(trans.belief_after.status_of(self.uncertain),
                      graphs.EdgeStatus.OPEN)

    def test_late_agent_stops(self):
        scenario = self.scenario.with_budgets([1.0, 1.0])
        outcome = sim.run_episode(
            evaluation.let_baseline_policy(self.graph), scenario,
            rng=np.random.default_rng(0))
        self.assertEqual(outcome.failures, {'A': 'late', 'B': 'late'})
        self.assertEqual(outcome.team_score, 0)
        self.assertEqual(outcome.route('A'), [9, 10])

    def test_dead_end_agent_is_stuck(self):
        graph = graphs.UncertainGraph.from_edge_list(
            [(0, 1, 1.0, 0.0, 1.0), (1, 2, 1.0, 0.0, 0.5)])
        scenario = sim.ScenarioConfig(graph,
                                      [sim.AgentSpec(0, 0, 2, 10.0, 1.0)])
        outcome = sim.run_episode(
            evaluation.let_baseline_policy(graph), scenario,
            ground_truth=sim.GroundTruth(graph, {1: False}, 0))
        self.assertEqual(outcome.failures[0], 'stuck')
        self.assertIsNone(outcome.arrival_times[0])
        self.assertFalse(outcome.on_time[0])
        self.assertEqual(outcome.explored, [1])
        self.assertAlmostEqual(outcome.delta_h, LN2)

    def test_run_episode_unexpected_kwarg(self):
        self.assertRaises(TypeError, sim.run_episode,
                          evaluation.let_baseline_policy(self.graph),
                          self.scenario, unexpected=1)


class TestNetworks(unittest.TestCase):

    def test_toy_network(self):
        graph = networks.toy_network()
        self.assertEqual(graph.n_nodes, 14)
        self.assertEqual(len(graph.uncertain_edges), 1)
        edge = graph.edges[graph.uncertain_edges[0]]
        self.assertEqual(edge.label, '13-4')
        self.assertEqual(edge.p_open, 0.5)
        self.assertAlmostEqual(graphs.least_expected_time(graph, 9, 12), 6.0)
        detour = graphs.path_result(graph, (9, 10, 13, 11, 12))
        self.assertAlmostEqual(detour.mu_total, 7.0)
        self.assertAlmostEqual(graphs.least_expected_time(graph, 1, 8), 11.5)

    def test_toy_scenarios(self):
        numpy.testing.assert_allclose(networks.toy_scenario(1).weights,
                                      [0.7, 0.3])
        scenario = networks.toy_scenario(2)
        numpy.testing.assert_allclose(scenario.weights, [0.3, 0.7])
        self.assertEqual(scenario.destinations, (8, 12))
        self.assertEqual([a.budget for a in scenario.agents], [7.0, 14.0])

    def test_random_network(self):
        graph = networks.random_network(6, np.random.default_rng(0))
        self.assertEqual(graph.nodes, tuple(range(6)))
        for src in range(6):
            for dst in range(6):
                if src != dst:
                    self.assertTrue(np.isfinite(
                        graphs.least_expected_time(graph, src, dst)))
        self.assertRaises(TypeError, networks.random_network, 6,
                          np.random.default_rng(0), unexpected=1)


class TestEmbedding(CacheDirTestCase):

    def setUp(self):
        CacheDirTestCase.setUp(self)
        self.graph = networks.toy_network()
        self.prior = self.graph.prior_belief()

    def test_cooccurrence(self):
        corpus = embedding.Corpus([(0, 1, 2)], [2.0], (0, 1, 2))
        expected = np.asarray([[0, 2, 0], [2, 0, 2], [0, 2, 0]])
        numpy.testing.assert_array_equal(corpus.cooccurrence(1), expected)
        self.assertEqual(corpus.cooccurrence(2)[0, 2], 2.0)
        self.assertRaises(AssertionError, embedding.Corpus, [(0,)], [1.0],
                          (0, 1))

    def test_skipgram_gradient(self):
        rng = np.random.default_rng(0)
        center = rng.normal(size=(5, 3))
        context = rng.normal(size=(5, 3))
        cooc = rng.uniform(size=(5, 5))
        _, grad_center, grad_context = embedding.skipgram_loss_and_grad(
            center, context, cooc)
        numpy.testing.assert_allclose(
            grad_center.ravel(), numerical_gradient(
                lambda flat: embedding.skipgram_loss_and_grad(
                    flat.reshape(5, 3), context, cooc)[0], center.ravel()),
            rtol=1e-4, atol=1e-7)
        numpy.testing.assert_allclose(
            grad_context.ravel(), numerical_gradient(
                lambda flat: embedding.skipgram_loss_and_grad(
                    center, flat.reshape(5, 3), cooc)[0], context.ravel()),
            rtol=1e-4, atol=1e-7)
        self.assertRaises(InputError, embedding.skipgram_loss_and_grad,
                          center, context, np.zeros((5, 5)))

    def test_skipgram_pair_gradient(self):
        rng = np.random.default_rng(1)
        center = rng.normal(size=(4, 2))
        context = rng.normal(size=(4, 2))
        _, grad_center, grad_context = embedding.skipgram_log_prob_grad(
            center, context, 1, 3)
        numpy.testing.assert_allclose(
            grad_center.ravel(), numerical_gradient(
                lambda flat: embedding.skipgram_log_prob_grad(
                    flat.reshape(4, 2), context, 1, 3)[0], center.ravel()),
            rtol=1e-4, atol=1e-7)
        numpy.testing.assert_allclose(
            grad_context.ravel(), numerical_gradient(
                lambda flat: embedding.skipgram_log_prob_grad(
                    center, flat.reshape(4, 2), 1, 3)[0], context.ravel()),
            rtol=1e-4, atol=1e-7)

    def test_build_corpus(self):
        corpus = embedding.build_corpus(self.graph, self.prior, [8, 12])
        self.assertEqual(corpus.nodes, self.graph.nodes)
        chains = dict(zip(corpus.chains, corpus.weights))
        self.assertAlmostEqual(chains[(3, 14, 13, 4, 8)], 1 / 7.5)
        self.assertAlmostEqual(chains[(10, 11, 13)], 1 / (1 + 1.75))
        self.assertRaises(InputError, embedding.build_corpus, self.graph,
                          self.prior, [])

    def test_random_walk_corpus(self):
        corpus = embedding.random_walk_corpus(
            self.graph, self.prior, np.random.default_rng(0),
            walks_per_node=2, walk_length=4)
        self.assertGreater(len(corpus), 0)
        for chain in corpus.chains:
            self.assertLessEqual(len(chain), 4)
            for source, target in zip(chain[:-1], chain[1:]):
                self.assertTrue(self.graph.has_edge(source, target))
        self.assertRaises(TypeError, embedding.random_walk_corpus,
                          self.graph, self.prior, np.random.default_rng(0),
                          unexpected=1)

    def test_train_skipgram(self):
        corpus = embedding.build_corpus(self.graph, self.prior, [8, 12])
        emb, losses = embedding.train_skipgram(
            corpus, 4, epochs=30, return_losses=True)
        self.assertEqual(emb.center.shape, (14, 4))
        self.assertEqual(len(losses), 31)
        self.assertLess(losses[-1], losses[0])
        self.assertAlmostEqual(embedding.corpus_loss(emb, corpus),
                               losses[-1])
        self.assertRaises(ConfigurationError, embedding.train_skipgram,
                          corpus, 0)
        self.assertRaises(ConfigurationError, embedding.train_skipgram,
                          corpus, 3, init=emb)

    @hypothesis.settings(max_examples=10, deadline=None)
    @hypothesis.given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_cooccurring_nodes_are_similar(self, seed):
        corpus = embedding.Corpus([(0, 1, 2), (2, 1, 0), (3, 4, 5),
                                   (5, 4, 3)], [1.0] * 4, range(6))
        emb = embedding.train_skipgram(corpus, 8, window=2, epochs=500,
                                       lr=2.0, rng_seed=seed)

        def cosine(i, j):
            u, v = emb.center[i], emb.center[j]
            return u @ v / (np.linalg.norm(u) * np.linalg.norm(v))

        # 0 and 2 always share chains, 0 and 3 (or 2 and 5) never do
        self.assertGreater(cosine(0, 2), cosine(0, 3))
        self.assertGreater(cosine(3, 5), cosine(2, 5))

    def test_refresh(self):
        corpus = embedding.build_corpus(self.graph, self.prior, [8, 12])
        emb = embedding.train_skipgram(corpus, 4, epochs=5,
                                       status_key=self.prior.status_key())
        self.assertIs(embedding.refresh(emb, self.graph, self.prior,
                                        [8, 12]), emb)
        revealed = self.prior.with_status(
            {self.graph.uncertain_edges[0]: graphs.EdgeStatus.BLOCKED})
        new = embedding.refresh(emb, self.graph, revealed, [8, 12],
                                epochs=2)
        self.assertEqual(new.status_key, revealed.status_key())
        self.assertFalse(np.array_equal(new.center, emb.center))

    def test_assemble_features(self):
        scenario = networks.toy_scenario(2)
        corpus = embedding.build_corpus(self.graph, self.prior,
                                        scenario.destinations)
        emb = embedding.train_skipgram(corpus, 4, epochs=2)
        belief = graphs.initial_belief(self.graph, scenario.agents)
        features = embedding.assemble_features(emb, self.graph, belief,
                                               scenario.agents, 'A')
        self.assertEqual(features.values.shape, (14, 9))
        self.assertEqual(features.channels, embedding.FEATURE_CHANNELS)
        channels = features.values[:, 4:]
        index = self.graph.index
        self.assertEqual(channels[:, 0].sum(), 1)
        self.assertEqual(channels[index[9], 0], 1)
        self.assertEqual(channels[index[12], 1], 1)
        self.assertEqual(channels[index[8], 2], 1)
        numpy.testing.assert_allclose(channels[:, 3], 1.0)
        self.assertAlmostEqual(channels[index[13], 4], LN2)
        self.assertRaises(InputError, embedding.assemble_features, emb,
                          self.graph, belief, scenario.agents, 'C')

    def test_save_load_embeddings(self):
        corpus = embedding.build_corpus(self.graph, self.prior, [8])
        emb = embedding.train_skipgram(corpus, 3, epochs=2)
        path = os.path.join(TEST_CACHE_DIR, 'embeddings.txt')
        embedding.save_embeddings(emb, path)
        loaded = embedding.load_embeddings(path)
        self.assertEqual(loaded.nodes, emb.nodes)
        numpy.testing.assert_array_equal(loaded.center, emb.center)
        numpy.testing.assert_array_equal(loaded.context, emb.context)
        write_text(path, 'not embeddings\n')
        with self.assertRaises(DataError) as err:
            embedding.load_embeddings(path)
        self.assertEqual(err.exception.line, 1)


class TestPolicy(CacheDirTestCase):

    def setUp(self):
        CacheDirTestCase.setUp(self)
        rng = np.random.default_rng(0)
        self.graph = networks.random_network(4, rng, chord_prob=1.0)
        self.belief = self.graph.prior_belief()
        self.src, self.dst = self.graph.neighbourhood_arrays(self.belief)
        self.features = rng.normal(size=(4, 5))

    def forward(self, params, attention=True, features=None):
        if features is None:
            features = self.features
        return policy_net.gat_forward_arrays(params, features, self.src,
                                             self.dst, 4,
                                             attention=attention)

    def test_gat_gradient(self):
        """Check the analytic GAT gradients against finite differences."""
        rng = np.random.default_rng(1)
        for attention in (True, False):
            params = policy_net.init_params([5, 3, 2], 2, rng_seed=2)
            reprs, cache = self.forward(params, attention=attention)
            self.assertEqual(reprs.shape, (4, 4))
            weights = rng.normal(size=reprs.shape)
            grads, grad_features = policy_net.gat_backward(params, cache,
                                                           weights)

            def objective(flat):
                trial = params.copy()
                trial.set_flat(flat)
                return np.sum(weights * self.forward(trial, attention)[0])

            numpy.testing.assert_allclose(
                grads.flatten(), numerical_gradient(objective,
                                                    params.flatten()),
                rtol=1e-4, atol=1e-6)
            numpy.testing.assert_allclose(
                grad_features.ravel(), numerical_gradient(
                    lambda flat: np.sum(weights * self.forward(
                        params, attention, flat.reshape(4, 5))[0]),
                    self.features.ravel()),
                rtol=1e-4, atol=1e-6)

    @hypothesis.settings(max_examples=10, deadline=None)
    @hypothesis.given(st.sampled_from([1, 2, 8]),
                      st.integers(min_value=4, max_value=12),
                      st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_log_prob_gradient_sweep(self, heads, n_nodes, seed):
        rng = np.random.default_rng(seed)
        graph = networks.random_network(n_nodes, rng, chord_prob=0.3)
        belief = graph.prior_belief()
        src, dst = graph.neighbourhood_arrays(belief)
        features = rng.normal(size=(n_nodes, 5))
        params = policy_net.init_params([5, 3, 2], heads,
                                        rng_seed=int(seed % 1000))

        def log_probs(trial):
            reprs, cache = policy_net.gat_forward_arrays(
                trial, features, src, dst, n_nodes)
            dist = policy_net.action_distribution(reprs, graph, belief, 0)
            return reprs, cache, dist

        reprs, cache, dist = log_probs(params)
        edge_id = dist.candidates[-1]
        grad = policy_net.log_prob_gradient(params, cache, reprs, dist,
                                            edge_id)

        def objective(flat):
            trial = params.copy()
            trial.set_flat(flat)
            dist = log_probs(trial)[2]
            return np.log(dist.probs[dist.position(edge_id)])

        numpy.testing.assert_allclose(
            grad.flatten(), numerical_gradient(objective, params.flatten()),
            rtol=1e-4, atol=1e-6)

    @hypothesis.settings(max_examples=20, deadline=None)
    @hypothesis.given(st.integers(min_value=4, max_value=10),
                      st.integers(min_value=0, max_value=2 ** 32 - 1),
                      st.booleans())
    def test_permutation_equivariance(self, n_nodes, seed, attention):
        rng = np.random.default_rng(seed)
        graph = networks.random_network(n_nodes, rng, chord_prob=0.4)
        src, dst = graph.neighbourhood_arrays(graph.prior_belief())
        features = rng.normal(size=(n_nodes, 5))
        params = policy_net.init_params([5, 3, 2], 2,
                                        rng_seed=int(seed % 1000))
        reprs = policy_net.gat_forward_arrays(
            params, features, src, dst, n_nodes, attention=attention)[0]
        perm = rng.permutation(n_nodes)
        permuted = np.empty_like(features)
        permuted[perm] = features
        reprs_perm = policy_net.gat_forward_arrays(
            params, permuted, perm[src], perm[dst], n_nodes,
            attention=attention)[0]
        numpy.testing.assert_allclose(reprs_perm[perm], reprs, rtol=1e-10,
                                      atol=1e-12)

    @hypothesis.settings(max_examples=10, deadline=None)
    @hypothesis.given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_disconnected_component_gets_no_gradient(self, seed):
        rng = np.random.default_rng(seed)
        graph = graphs.UncertainGraph.from_edge_list(
            [(0, 1, 1.0, 0.1, 1.0), (1, 2, 1.0, 0.1, 1.0),
             (2, 0, 1.0, 0.1, 1.0), (0, 2, 2.0, 0.1, 1.0),
             (3, 4, 1.0, 0.1, 1.0), (4, 5, 1.0, 0.1, 1.0),
             (5, 3, 1.0, 0.1, 1.0)])
        belief = graph.prior_belief()
        features = rng.normal(size=(6, 5))
        params = policy_net.init_params([5, 3, 2], 2,
                                        rng_seed=int(seed % 1000))
        reprs, cache = policy_net.gat_forward(params, features, graph,
                                              belief)
        dist = policy_net.action_distribution(reprs, graph, belief, 0)
        grads, grad_features = policy_net.backward_from_logits(
            params, cache, reprs, dist,
            policy_net.log_prob_grad_logits(dist, dist.candidates[0]))
        numpy.testing.assert_array_equal(grad_features[3:], 0.0)
        self.assertTrue(np.any(grad_features[:3] != 0))
        # features of the other component leave the distribution unchanged
        moved = features.copy()
        moved[3:] += rng.normal(size=(3, 5))
        other = policy_net.action_distribution(
            policy_net.gat_forward(params, moved, graph, belief)[0], graph,
            belief, 0)
        numpy.testing.assert_array_equal(other.probs, dist.probs)

    def test_attention_coefficients(self):
        params = policy_net.init_params([5, 3], 2)
        for attention in (True, False):
            _, cache = self.forward(params, attention=attention)
            numpy.testing.assert_allclose(cache.alpha_row_sums(), 1.0)
        degree = np.bincount(self.src, minlength=4)
        numpy.testing.assert_allclose(
            cache.layers[0]['alpha'][:, 0], 1.0 / degree[self.src])

    def test_log_prob_and_kl_gradients(self):
        params = policy_net.init_params([5, 3], 2, rng_seed=3)
        reprs, cache = self.forward(params)
        dist = policy_net.action_distribution(reprs, self.graph, self.belief,
                                              0)
        self.assertEqual(len(dist.candidates), 3)
        self.assertAlmostEqual(dist.probs.sum(), 1.0)
        edge_id = dist.candidates[1]
        target = expert.expert_target(3, 2)

        def distribution(flat):
            trial = params.copy()
            trial.set_flat(flat)
            return policy_net.action_distribution(
                self.forward(trial)[0], self.graph, self.belief, 0)

        grad = policy_net.log_prob_gradient(params, cache, reprs, dist,
                                            edge_id)
        numpy.testing.assert_allclose(
            grad.flatten(), numerical_gradient(
                lambda flat: np.log(distribution(flat).probs[1]),
                params.flatten()),
            rtol=1e-4, atol=1e-6)
        grad = policy_net.backward_from_logits(
            params, cache, reprs, dist,
            policy_net.kl_grad_logits(dist, target))[0]
        numpy.testing.assert_allclose(
            grad.flatten(), numerical_gradient(
                lambda flat: policy_net.kl_divergence(
                    target, distribution(flat).probs),
                params.flatten()),
            rtol=1e-4, atol=1e-6)
        self.assertGreater(policy_net.kl_divergence(target, dist.probs), 0)
        self.assertAlmostEqual(policy_net.kl_divergence(target, target), 0)

    def test_stale_cache(self):
        params = policy_net.init_params([5, 3], 2)
        reprs, cache = self.forward(params)
        params.set_flat(params.flatten())
        self.assertRaises(InvariantError, policy_net.gat_backward, params,
                          cache, np.ones_like(reprs))

    def test_dead_end(self):
        graph = graphs.UncertainGraph.from_edge_list(
            [(0, 1, 1.0, 0.0, 0.5), (1, 0, 1.0, 0.0, 1.0)])
        belief = graph.prior_belief().with_status(
            {0: graphs.EdgeStatus.BLOCKED})
        self.assertRaises(DeadEndError, policy_net.action_distribution,
                          np.ones((2, 3)), graph, belief, 0)

    def test_params_validation(self):
        self.assertRaises(ConfigurationError, policy_net.init_params, [5],
                          2)
        params = policy_net.init_params([5, 3], 2)
        self.assertRaises(ConfigurationError, self.forward, params, True,
                          np.ones((4, 6)))
        self.assertRaises(ConfigurationError, params.set_flat, np.ones(3))
        self.assertRaises(ConfigurationError, policy_net.GatParams,
                          params.weights, [])

    def test_checkpoint_round_trip(self):
        params = policy_net.init_params([5, 3, 2], 2, rng_seed=4)
        path = os.path.join(TEST_CACHE_DIR, 'params.json')
        policy_net.save_params(params, path)
        loaded, doc = policy_net.load_params(path, dims=[5, 3, 2], heads=2)
        numpy.testing.assert_array_equal(loaded.flatten(), params.flatten())
        self.assertEqual(doc['layers'], 2)
        self.assertRaises(ConfigurationError, policy_net.load_params, path,
                          dims=[5, 3])
        self.assertRaises(ConfigurationError, policy_net.load_params, path,
                          heads=3)
        write_text(path, '{"format": "other"}')
        self.assertRaises(ConfigurationError, policy_net.load_params, path)

    def test_gat_policy(self):
        """Check the full policy, including the log-probability gradient
        through the embedding and feature pipeline."""
        settings = get_minimal_settings()
        policy = policy_net.GatPolicy.initialise(settings)
        scenario = networks.toy_scenario(2)
        belief = graphs.initial_belief(scenario.graph, scenario.agents)
        belief = belief.with_agent('A', position=10, spent=2.0)
        output = policy.distribution(scenario, belief, 'A')
        self.assertEqual(output.dist.candidates, (1, 3))
        self.assertIn(policy.act(scenario, belief, 'A'), (1, 3))
        self.assertIn(policy.act(scenario, belief, 'A',
                                 np.random.default_rng(0)), (1, 3))
        params = policy.params
        grad = policy_net.log_prob_gradient(params, output.cache,
                                            output.reprs, output.dist, 3)
        base = params.flatten()

        def log_prob(flat):
            params.set_flat(flat)
            return np.log(policy.distribution(scenario, belief,
                                              'A').dist.probs[1])

        numerical = numerical_gradient(log_prob, base)
        params.set_flat(base)
        numpy.testing.assert_allclose(grad.flatten(), numerical, rtol=1e-4,
                                      atol=1e-6)

    def test_embedding_cache_is_bounded(self):
        settings = get_minimal_settings()
        policy = policy_net.GatPolicy(
            policy_net.GatPolicy.initialise(settings).params, settings,
            greedy=False, cache_size=1)
        scenario = networks.toy_scenario(2)
        graph = scenario.graph
        edge_id = graph.edge_between(13, 4).id
        prior = graph.prior_belief()
        opened = prior.with_status({edge_id: graphs.EdgeStatus.OPEN})
        blocked = prior.with_status({edge_id: graphs.EdgeStatus.BLOCKED})
        first = policy.embeddings(graph, opened, scenario.destinations)
        policy.embeddings(graph, blocked, scenario.destinations)
        self.assertEqual(policy.n_cached_embeddings, 1)
        again = policy.embeddings(graph, opened, scenario.destinations)
        self.assertIsNot(again, first)
        numpy.testing.assert_array_equal(again.center, first.center)
        # two episodes on a graph with many uncertain edges
        graph = networks.random_network(8, np.random.default_rng(1),
                                        chord_prob=0.5, uncertain_prob=0.8)
        policy = policy_net.GatPolicy(policy.params, settings, greedy=False,
                                      cache_size=2)
        scenario = sim.ScenarioConfig(graph, [sim.AgentSpec(0, 0, 4, 50.0,
                                                            1.0)])
        for seed in range(2):
            sim.run_episode(policy, scenario,
                            rng=np.random.default_rng(seed))
            self.assertLessEqual(policy.n_cached_embeddings, 2)
        self.assertRaises(ConfigurationError, policy_net.GatPolicy,
                          policy.params, settings, cache_size=0)

    def test_policy_checkpoint(self):
        settings = get_minimal_settings()
        policy = policy_net.GatPolicy.initialise(settings)
        path = os.path.join(TEST_CACHE_DIR, 'policy.json')
        policy_net.save_policy(policy, path, manifest_hash='abc')
        loaded = policy_net.load_policy(path)
        numpy.testing.assert_array_equal(loaded.params.flatten(),
                                         policy.params.flatten())
        self.assertEqual(loaded.settings.get_settings_dict(),
                         settings.get_settings_dict())
        self.assertRaises(ConfigurationError, policy_net.GatPolicy,
                          policy_net.init_params([3, 2], 1), settings)


class TestSettings(unittest.TestCase):

    def test_settings_unexpected_arg(self):
        self.assertRaises(TypeError, marvelnav.settings.MarvelSettings,
                          unexpected=1)

    def test_settings_unexpected_attr(self):
        settings = marvelnav.settings.MarvelSettings()
        with self.assertRaises(TypeError):
            settings.unexpected = 1

    def test_settings_check(self):
        self.assertEqual(get_minimal_settings().check().embed_dim, 4)
        for values in ({'embed_dim': 0}, {'optimizer': 'rmsprop'},
                       {'expert_weight': 1.5}, {'lr_decay': 0},
                       {'epochs': -1}, {'update_mode': 'batch'}):
            settings = marvelnav.settings.MarvelSettings(**values)
            self.assertRaises(ConfigurationError, settings.check)

    def test_settings_save_name(self):
        settings = get_minimal_settings()
        self.assertEqual(settings.feature_dim, 9)
        self.assertEqual(
            settings.save_name(),
            '4d_2h1x3_beta0_5_expectimax_adam0_001_3epochs_seed0')
        settings.attention = False
        settings.entropy_term = False
        settings.expert_loss = False
        self.assertEqual(settings.save_name(include_seed=False),
                         '4d_2h1x3_noatt_noent_noexp_adam0_001_3epochs')

    def test_config_hash(self):
        settings = get_minimal_settings()
        self.assertEqual(settings.config_hash(),
                         get_minimal_settings().config_hash())
        settings.seed = 1
        self.assertNotEqual(settings.config_hash(),
                            get_minimal_settings().config_hash())


class TestExpert(unittest.TestCase):

    def test_sota_surrogate(self):
        path = graphs.PathResult((0, 1), 5.0, 1.0, True, 5.0)
        self.assertAlmostEqual(expert.sota_surrogate(5.0, 0.0, path), 0.5)
        self.assertAlmostEqual(expert.sota_surrogate(9.0, 2.0, path),
                               scipy.special.expit(2 / np.sqrt(1 + 1e-6)))
        self.assertAlmostEqual(expert.sota_surrogate(9.0, 2.0, path),
                               0.8808, places=4)
        self.assertGreaterEqual(expert.sota_surrogate(15.0, 0.0, path),
                                0.999)
        self.assertEqual(expert.sota_surrogate(15.0, 0.0,
                                               graphs.UNREACHABLE), 0)
        self.assertRaises(InputError, expert.sota_surrogate, 5.0, 0.0, path,
                          kappa=0)

    @hypothesis.given(st.floats(min_value=0, max_value=50),
                      st.floats(min_value=0, max_value=50),
                      st.floats(min_value=0.1, max_value=10))
    def test_sota_surrogate_monotone(self, budget, extra, kappa):
        path = graphs.PathResult((0, 1), 5.0, 1.0, True, 5.0)
        low = expert.sota_surrogate(budget, 0.0, path, kappa)
        high = expert.sota_surrogate(budget + extra, 0.0, path, kappa)
        self.assertGreaterEqual(low, 0)
        self.assertLessEqual(high, 1)
        self.assertLessEqual(low, high)

    def test_expert_target(self):
        target = expert.expert_target(3, 1)
        self.assertAlmostEqual(target.sum(), 1.0)
        self.assertEqual(int(np.argmax(target)), 1)
        self.assertAlmostEqual(target[1], np.exp(10) / (np.exp(10) + 2))

    def test_diamond_expectimax(self):
        """
        Tight budget: only the route via the uncertain edge can be on time.
        Loose budget: the certain direct edge is safe. With the entropy
        term the expert prefers to reveal the uncertain edge.
        """
        cases = [(4.0, 0.0, [0.5, 0.0], 0),
                 (6.0, 0.0, [0.5, 1.0], 3),
                 (6.0, 1.0, [0.5, 1 - LN2], 0)]
        for budget, eta, values, edge_id in cases:
            scenario = diamond_scenario(budget)
            belief = graphs.initial_belief(scenario.graph, scenario.agents)
            decision = expert.ExpertPolicy(eta=eta).decide(scenario, belief,
                                                           0)
            self.assertEqual(decision.mode, 'expectimax')
            self.assertEqual(decision.candidates, (0, 3))
            numpy.testing.assert_allclose(decision.values, values,
                                          atol=1e-9)
            self.assertEqual(decision.edge, edge_id)

    def test_diamond_heuristic(self):
        scenario = diamond_scenario(6.0)
        belief = graphs.initial_belief(scenario.graph, scenario.agents)
        candidates, values = expert.heuristic_values(scenario, belief, 0)
        self.assertEqual(candidates, (0, 3))
        numpy.testing.assert_allclose(values, [1 + LN2, 1.0])
        self.assertRaises(TypeError, expert.heuristic_values, scenario,
                          belief, 0, unexpected=1)

    def test_toy_priorities(self):
        """
        Robot A at node 10 either continues directly or detours via 13 to
        reveal 13 -> 4 for Robot B. The detour is worth it only when B has
        the higher priority.
        """
        cdf = scipy.stats.norm.cdf
        robot_a = [cdf(1 / np.sqrt(0.08 + 1e-6)), 0.5]
        robot_b = [0.5 * cdf(2.5 / np.sqrt(0.1075 + 1e-6)),
                   0.5 * cdf(2.5 / np.sqrt(0.1075 + 1e-6)) +
                   0.5 * cdf(0.5 / np.sqrt(0.1825 + 1e-6))]
        for number, edge_id in ((1, 1), (2, 3)):
            scenario = networks.toy_scenario(number)
            belief = toy_midway_belief(scenario)
            decision = expert.ExpertPolicy().decide(scenario, belief, 'A')
            self.assertEqual(decision.candidates, (1, 3))
            weights = scenario.weights
            numpy.testing.assert_allclose(
                decision.values,
                weights[0] * np.asarray(robot_a) +
                weights[1] * np.asarray(robot_b), rtol=1e-6)
            self.assertEqual(decision.edge, edge_id)

    def test_weight_scaling(self):
        scenario = networks.toy_scenario(2)
        belief = toy_midway_belief(scenario)
        numpy.testing.assert_allclose(
            expert.expectimax_values(scenario, belief, 'A',
                                     weights=[3, 7])[1],
            expert.expectimax_values(scenario, belief, 'A')[1])
        self.assertRaises(InputError, expert.normalise_weights, scenario,
                          [1, -1])

    def test_forced_unknown_edge(self):
        scenario = networks.toy_scenario(2)
        graph = scenario.graph
        belief = graphs.initial_belief(graph, scenario.agents)
        belief = belief.with_agent('A', position=13, spent=3.5)
        uncertain = graph.edge_between(13, 4).id
        self.assertRaises(InvariantError, expert.team_value, scenario,
                          belief, forced=('A', uncertain))
        self.assertRaises(InvariantError, expert.heuristic_values, scenario,
                          belief, 'A')

    def test_size_limit_warning(self):
        scenario = networks.toy_scenario(2)
        belief = toy_midway_belief(scenario)
        policy = expert.ExpertPolicy(max_unknown=0)
        with warnings.catch_warnings(record=True) as war:
            warnings.simplefilter('always')
            self.assertEqual(policy.effective_mode(scenario, belief),
                             'heuristic')
            self.assertEqual(policy.decide(scenario, belief, 'A').mode,
                             'heuristic')
            self.assertEqual(len(war), 1)
        self.assertRaises(InputError, expert.ExpertPolicy, mode='greedy')

    def test_expert_action(self):
        scenario = networks.toy_scenario(2)
        belief = toy_midway_belief(scenario)
        edge_id, target = expert.expert_action(
            scenario, belief, 'A', settings=get_minimal_settings())
        self.assertEqual(edge_id, 3)
        self.assertEqual(target.shape, (2,))
        self.assertAlmostEqual(target.sum(), 1.0)
        self.assertEqual(int(np.argmax(target)), 1)
        finished = belief.with_agent('A', arrived=True)
        self.assertRaises(InputError, expert.expert_action, scenario,
                          finished, 'A')


class TestTrainer(CacheDirTestCase):

    def test_lr_schedule(self):
        self.assertEqual(trainer.lr_schedule(0), 1e-3)
        self.assertEqual(trainer.lr_schedule(99), 1e-3)
        self.assertAlmostEqual(trainer.lr_schedule(250), 1e-3 * 0.95 ** 2)

    def test_step_gradient(self):
        settings = get_minimal_settings()
        step = make_step(surrogate=0.5, delta_h=0.2)
        numpy.testing.assert_allclose(
            trainer.step_gradient(step, 0.4, settings), -0.6)
        settings.entropy_term = False
        numpy.testing.assert_allclose(
            trainer.step_gradient(step, 0.4, settings), -0.8)
        settings.expert_loss = False
        numpy.testing.assert_allclose(
            trainer.step_gradient(step, 0.4, settings), 0.2)
        zero = make_step(surrogate=0.0, delta_h=0.0)._replace(grad_kl=None)
        numpy.testing.assert_array_equal(
            trainer.step_gradient(zero, 0.4, get_minimal_settings()), 0)

    def test_compute_gradient(self):
        settings = get_minimal_settings()
        scenario = networks.toy_scenario(2)
        steps = [make_step(0.5, 0.0, agent='A'),
                 make_step(1.0, LN2, agent='B')]
        grad = trainer.compute_gradient(
            [trainer.Trajectory(steps), trainer.Trajectory(steps[:1])],
            scenario, settings)
        expected = (2 * trainer.step_gradient(steps[0], 0.3, settings) +
                    trainer.step_gradient(steps[1], 0.7, settings)) / 2
        numpy.testing.assert_allclose(grad, expected)
        self.assertRaises(InputError, trainer.compute_gradient, [],
                          scenario, settings)
        self.assertRaises(InputError, trainer.compute_gradient,
                          [trainer.Trajectory([])], scenario, settings)

    def test_trajectory(self):
        steps = [make_step(0.5, 0.1), make_step(0.5, 0.2)._replace(edge=1)]
        trajectory = trainer.Trajectory(steps)
        self.assertEqual(len(trajectory), 2)
        self.assertAlmostEqual(trajectory.delta_h, 0.3)
        self.assertEqual(trajectory.expert_agreement(), 0.5)
        self.assertTrue(np.isnan(trainer.Trajectory([]).expert_agreement()))

    def test_optimizers(self):
        for name in ('sgd', 'adam'):
            params = policy_net.init_params([3, 2], 1)
            before = params.flatten()
            trainer.get_optimizer(name).step(params, np.ones(before.shape),
                                             0.01)
            numpy.testing.assert_allclose(params.flatten() - before, 0.01,
                                          rtol=1e-6)
            self.assertEqual(params.version, 1)
        self.assertRaises(InputError, trainer.get_optimizer, 'rmsprop')

    def test_agent_surrogate(self):
        scenario = networks.toy_scenario(2)
        belief = graphs.initial_belief(scenario.graph, scenario.agents)
        arrived = belief.with_agent('B', position=8, spent=10.0,
                                    arrived=True)
        self.assertAlmostEqual(trainer.agent_surrogate(scenario, arrived,
                                                       'B'), 1.0)
        late = belief.with_agent('B', spent=20.0, failed='late')
        self.assertEqual(trainer.agent_surrogate(scenario, late, 'B'), 0)
        path = graphs.shortest_path_expected(scenario.graph, belief, 9, 12)
        self.assertAlmostEqual(trainer.agent_surrogate(scenario, belief,
                                                       'A'),
                               expert.sota_surrogate(7.0, 0.0, path))

    def test_train(self):
        settings = get_minimal_settings()
        settings.checkpoint_every = 2
        scenario = networks.toy_scenario(2)
        params, log = trainer.train(scenario, settings,
                                    checkpoint_dir=TEST_CACHE_DIR,
                                    disable_tqdm=True)
        self.assertEqual(list(log.columns), trainer.LOG_COLUMNS)
        self.assertEqual(list(log['epoch']), [0, 1, 2])
        self.assertTrue(params.all_finite())
        self.assertTrue(np.all(log['expert_agreement'].between(0, 1)))
        self.assertTrue(os.path.isfile(os.path.join(
            TEST_CACHE_DIR, settings.save_name() + '_epoch2.json')))
        # same seed, same run
        _, log_again = trainer.train(scenario, settings, disable_tqdm=True)
        pd.testing.assert_frame_equal(log, log_again)
        self.assertRaises(TypeError, trainer.train, scenario, settings,
                          unexpected=1)

    def test_train_variants(self):
        scenario = networks.toy_scenario(1)
        for values in ({'update_mode': 'episode', 'optimizer': 'sgd'},
                       {'expert_loss': False, 'attention': False},
                       {'expert_mode': 'heuristic', 'entropy_term': False}):
            settings = get_minimal_settings()
            settings.epochs = 2
            for key, value in values.items():
                setattr(settings, key, value)
            params, log = trainer.train(scenario, settings,
                                        disable_tqdm=True)
            self.assertTrue(params.all_finite())
            self.assertEqual(log.shape[0], 2)
        self.assertTrue(log['expert_agreement'].notnull().all())
        settings.expert_loss = False
        _, log = trainer.train(scenario, settings, disable_tqdm=True)
        self.assertTrue(log['expert_agreement'].isnull().all())
        _, log = trainer.train(scenario, settings, track_agreement=True,
                               disable_tqdm=True)
        self.assertTrue(log['expert_agreement'].notnull().all())

    @unittest.skipUnless(SLOW_TESTS, 'set MARVELNAV_SLOW_TESTS to run')
    def test_toy_training_matches_expert(self):
        """
        Trained on the illustrative network, Robot A detours via 13 only
        when Robot B has the higher priority, and the greedy policy is
        nearly as good as the expert it imitates.
        """
        routes = {1: [9, 10, 11, 12], 2: [9, 10, 13, 11, 12]}
        for number, route in sorted(routes.items()):
            scenario = networks.toy_scenario(number, seed=0)
            settings = marvelnav.settings.MarvelSettings(
                embed_dim=16, heads=2, layers=2, head_dim=8, lr=1e-2,
                epochs=1000, seed=0)
            params, _ = trainer.train(scenario, settings, disable_tqdm=True)
            trained = policy_net.GatPolicy(params, settings, greedy=True)
            expert_policy = expert.ExpertPolicy.from_settings(settings)
            agreement = AgreementRecorder(trained, expert_policy)
            outcome = sim.run_episode(agreement, scenario,
                                      rng=np.random.default_rng(0))
            steps = outcome.trajectories['A']
            self.assertEqual([step['node'] for step in steps] +
                             [steps[-1]['head']], route)
            self.assertGreaterEqual(agreement.rate(), 0.95)
            start = graphs.initial_belief(scenario.graph, scenario.agents)
            trained_value = expert.team_value(scenario, start,
                                              policy=trained)
            expert_value = expert.team_value(scenario, start,
                                             policy=expert_policy)
            let_value = expert.team_value(scenario, start)
            self.assertGreaterEqual(trained_value,
                                    expert_value - 0.02 * abs(expert_value))
            self.assertGreater(trained_value, let_value)

    def test_divergence(self):
        settings = get_minimal_settings()
        settings.epochs = 1
        with unittest.mock.patch.object(trainer, 'team_objective',
                                        return_value=np.nan):
            self.assertRaises(NumericalError, trainer.train,
                              networks.toy_scenario(2), settings,
                              disable_tqdm=True)

    def test_convergence_epoch(self):
        flat = pd.DataFrame({'epoch': np.arange(300),
                             'objective': np.full(300, 0.5)})
        self.assertEqual(trainer.convergence_epoch(flat), 0)
        step = pd.DataFrame({'epoch': np.arange(400),
                             'objective': np.concatenate(
                                 [np.zeros(100), np.ones(300)])})
        self.assertEqual(trainer.convergence_epoch(step), 149)
        rising = pd.DataFrame({'epoch': np.arange(400),
                               'objective': np.arange(1.0, 401.0)})
        self.assertIsNone(trainer.convergence_epoch(rising))
        self.assertIsNone(trainer.convergence_epoch(flat.iloc[:100]))
        self.assertRaises(TypeError, trainer.convergence_epoch, flat,
                          unexpected=1)


class TestEvaluation(unittest.TestCase):

    def test_let_policy(self):
        scenario = networks.toy_scenario(2)
        graph = scenario.graph
        policy = evaluation.LetPolicy(graph)
        belief = graphs.initial_belief(graph, scenario.agents)
        self.assertEqual(policy.act(scenario, belief, 'A'),
                         graph.edge_between(9, 10).id)
        at_3 = belief.with_agent('B', position=3, spent=5.0)
        self.assertEqual(policy.act(scenario, at_3, 'B'),
                         graph.edge_between(3, 14).id)
        blocked = at_3.with_status({graph.edge_between(13, 4).id:
                                    graphs.EdgeStatus.BLOCKED})
        self.assertEqual(policy.act(scenario, blocked, 'B'),
                         graph.edge_between(3, 5).id)
        self.assertRaises(DeadEndError, policy.act, scenario,
                          belief.with_agent('A', position=8), 'A')

    def test_report(self):
        scenario = networks.toy_scenario(2)
        report = evaluation.monte_carlo_sota(
            evaluation.let_baseline_policy(scenario.graph), scenario,
            trials=20, master_seed=1)
        self.assertEqual(list(report.table.index), ['A', 'B', 'team'])
        self.assertAlmostEqual(
            report.team_probability,
            0.3 * report.agent_probability('A') +
            0.7 * report.agent_probability('B'))
        self.assertTrue(np.all(report.table['trials'] == 20))
        doc = json.loads(report.to_json())
        self.assertEqual(len(doc['rows']), 3)
        self.assertEqual(doc['config']['trials'], 20)
        again = evaluation.monte_carlo_sota(
            evaluation.let_baseline_policy(scenario.graph), scenario,
            trials=20, master_seed=1)
        pd.testing.assert_frame_equal(report.table, again.table)
        self.assertRaises(InputError, evaluation.monte_carlo_sota,
                          evaluation.let_baseline_policy(scenario.graph),
                          scenario, trials=0)
        self.assertRaises(TypeError, evaluation.monte_carlo_sota,
                          evaluation.let_baseline_policy(scenario.graph),
                          scenario, unexpected=1)

    def test_impossible_budget(self):
        scenario = networks.toy_scenario(2).with_budgets([1.0, 1.0])
        report = evaluation.monte_carlo_sota(
            evaluation.let_baseline_policy(scenario.graph), scenario,
            trials=10)
        numpy.testing.assert_array_equal(
            report.table['on_time_probability'], 0)
        numpy.testing.assert_array_equal(report.table['std_error'], 0)

    def test_gaussian_on_time_probability(self):
        """Untruncated costs on a single edge give the Gaussian CDF."""
        graph = graphs.UncertainGraph.from_edge_list(
            [(0, 1, 2.0, 0.5, 1.0)])
        scenario = sim.ScenarioConfig(graph,
                                      [sim.AgentSpec(0, 0, 1, 2.5, 1.0)],
                                      truncate=False)
        report = evaluation.monte_carlo_sota(
            evaluation.let_baseline_policy(graph), scenario, trials=2000)
        self.assertLess(abs(report.agent_probability(0) -
                            scipy.stats.norm.cdf(1.0)),
                        4 * report.table.loc['0', 'std_error'])

    def test_budget_monotonicity(self):
        graph = networks.toy_network()
        probabilities = []
        for budget in (11.0, 12.0, 13.0, 14.0, 25.0):
            scenario = sim.ScenarioConfig(
                graph, [sim.AgentSpec('B', 1, 8, budget, 1.0)])
            report = evaluation.monte_carlo_sota(
                evaluation.let_baseline_policy(graph), scenario, trials=100,
                master_seed=2)
            probabilities.append(report.team_probability)
        self.assertTrue(np.all(np.diff(probabilities) >= 0))
        self.assertEqual(probabilities[-1], 1.0)

    def test_expert_and_gat_policies(self):
        scenario = networks.toy_scenario(2)
        for policy in (expert.ExpertPolicy(),
                       policy_net.GatPolicy.initialise(
                           get_minimal_settings())):
            report = evaluation.monte_carlo_sota(policy, scenario, trials=3)
            self.assertTrue(np.all(
                report.table['on_time_probability'].between(0, 1)))

    @unittest.skipUnless(SLOW_TESTS, 'set MARVELNAV_SLOW_TESTS to run')
    def test_sioux_falls_let(self):
        scenario = data_io.load_scenario(os.path.join(
            networks.DATA_DIR, 'sioux_falls_exact.yaml'))
        report = evaluation.monte_carlo_sota(
            evaluation.let_baseline_policy(scenario.graph), scenario,
            trials=10000)
        self.assertTrue(0 <= report.team_probability <= 1)
        self.assertLess(report.team_std_error, 0.01)


class TestDataIO(CacheDirTestCase):

    def test_sioux_falls(self):
        graph = networks.sioux_falls()
        self.assertEqual(graph.n_nodes, 24)
        self.assertEqual(len(graph.edges), 76)
        self.assertEqual(graph.uncertain_edges,
                         (9, 20, 23, 27, 29, 33, 50, 62))
        self.assertEqual(graph.edges[27].sigma, 1.0)
        self.assertEqual(graph.edges[27].p_open, 0.7)
        edge = graph.edges[9]
        self.assertAlmostEqual(edge.sigma, 0.25 * edge.mu)

    def test_missing_sidecar(self):
        graph = data_io.load_tntp(os.path.join(networks.DATA_DIR,
                                               'SiouxFalls_net.tntp'))
        self.assertEqual(graph.uncertain_edges, ())
        for edge in graph.edges:
            self.assertAlmostEqual(edge.sigma, 0.25 * edge.mu)

    def test_tntp_round_trip(self):
        graph = networks.toy_network()
        net = os.path.join(TEST_CACHE_DIR, 'net.tntp')
        side = os.path.join(TEST_CACHE_DIR, 'side.csv')
        data_io.export_tntp(graph, net, side)
        self.assertEqual(data_io.load_tntp(net, side), graph)
        self.assertRaises(InputError, data_io.export_tntp,
                          networks.random_network(
                              3, np.random.default_rng(0)), net)

    def test_sidecar_errors(self):
        net = os.path.join(TEST_CACHE_DIR, 'net.tntp')
        side = os.path.join(TEST_CACHE_DIR, 'side.csv')
        data_io.export_tntp(networks.toy_network(), net)
        write_text(side, '# uncertain links\nedge_id,sigma,p_open\n'
                   '1,,0.5\n2,,0\n')
        with self.assertRaises(DataError) as err:
            data_io.load_tntp(net, side)
        self.assertEqual(err.exception.line, 4)
        self.assertIn('p_open', str(err.exception))
        write_text(side, 'edge_id,sigma,p_open\n1,-1,0.5\n')
        with self.assertRaises(DataError) as err:
            data_io.load_tntp(net, side)
        self.assertEqual(err.exception.line, 2)
        write_text(side, 'edge_id,sigma,p_open\n1,,0.5\n1,,0.6\n')
        self.assertRaises(DataError, data_io.load_tntp, net, side)
        write_text(side, 'edge_id,sigma,p_open\n99,,0.5\n')
        self.assertRaises(DataError, data_io.load_tntp, net, side)
        write_text(side, 'edge_id,p_open\n1,0.5\n')
        self.assertRaises(DataError, data_io.load_tntp, net, side)

    def test_tntp_errors(self):
        net = os.path.join(TEST_CACHE_DIR, 'net.tntp')
        header = ('<NUMBER OF ZONES> 2\n<NUMBER OF NODES> 2\n'
                  '<FIRST THRU NODE> 1\n<NUMBER OF LINKS> 1\n'
                  '<END OF METADATA>\n\n~ init term cap len fft ;\n')
        write_text(net, header + '1 3 0 1 1.0 0.15 4 0 0 1 ;\n')
        with self.assertRaises(DataError) as err:
            data_io.load_tntp(net)
        self.assertEqual(err.exception.line, 8)
        write_text(net, header + '1 2 0 1 0.0 0.15 4 0 0 1 ;\n')
        self.assertRaises(DataError, data_io.load_tntp, net)
        write_text(net, header + '1 2 0 ;\n')
        self.assertRaises(DataError, data_io.load_tntp, net)
        write_text(net, header + '1 2 0 1 1.0 ;\n2 1 0 1 1.0 ;\n')
        self.assertRaises(DataError, data_io.load_tntp, net)
        write_text(net, header.replace('<END OF METADATA>\n', ''))
        self.assertRaises(DataError, data_io.load_tntp, net)

    def test_load_scenarios(self):
        scenario = data_io.load_scenario(os.path.join(networks.DATA_DIR,
                                                      'toy.yaml'))
        self.assertEqual([a.id for a in scenario.agents], ['A', 'B'])
        numpy.testing.assert_allclose(scenario.weights, [0.3, 0.7])
        self.assertEqual(scenario.graph, networks.toy_network())
        scenario = data_io.load_scenario(os.path.join(
            networks.DATA_DIR, 'sioux_falls_exact.yaml'))
        self.assertEqual(scenario.multipliers, [1.0, 1.0])
        self.assertAlmostEqual(
            scenario.agents[0].budget,
            graphs.least_expected_time(scenario.graph, 1, 20))

    def test_scenario_errors(self):
        agents = [{'origin': 9, 'destination': 12, 'budget': 7.0}]
        self.assertRaises(DataError, data_io.scenario_from_dict,
                          {'agents': agents})
        self.assertRaises(DataError, data_io.scenario_from_dict,
                          {'network': 'toy', 'agents': []})
        self.assertRaises(DataError, data_io.scenario_from_dict,
                          {'network': 'toy', 'agents': agents,
                           'unexpected': 1})
        self.assertRaises(DataError, data_io.scenario_from_dict,
                          {'network': 'toy',
                           'agents': [{'origin': 9, 'destination': 12}]})
        path = os.path.join(TEST_CACHE_DIR, 'scenario.yaml')
        write_text(path, '- just a list\n')
        self.assertRaises(DataError, data_io.load_scenario, path)

    def test_manifest(self):
        versions = {'numpy': '1'}
        first = data_io.RunManifest('eval', 'abc', {'seed': 0},
                                    versions=versions, timestamp='then')
        second = data_io.RunManifest('eval', 'abc', {'seed': 0},
                                     versions=versions, timestamp='now',
                                     outputs=['report.csv'])
        self.assertEqual(first.manifest_hash, second.manifest_hash)
        third = data_io.RunManifest('eval', 'abc', {'seed': 1},
                                    versions=versions)
        self.assertNotEqual(first.manifest_hash, third.manifest_hash)
        path = os.path.join(TEST_CACHE_DIR, 'manifest.json')
        second.write(path)
        with open(path) as in_file:
            self.assertEqual(json.load(in_file)['manifest_hash'],
                             first.manifest_hash)
        self.assertIn('networkx', data_io.library_versions())

    def test_csv_and_json_outputs(self):
        frame = pd.DataFrame({'a': [1, 2], 'b': [0.5, 0.25]})
        path = os.path.join(TEST_CACHE_DIR, 'out.csv')
        data_io.write_csv(frame, path, 'abc', index=False)
        with open(path) as in_file:
            self.assertEqual(in_file.readline(), '# manifest: abc\n')
        loaded, manifest_hash = data_io.read_csv(path)
        self.assertEqual(manifest_hash, 'abc')
        pd.testing.assert_frame_equal(loaded, frame)
        write_text(path, 'a,b\n1,2\n')
        self.assertRaises(DataError, data_io.read_csv, path)
        path = os.path.join(TEST_CACHE_DIR, 'out.json')
        data_io.write_json({'value': np.float64(0.5),
                            'array': np.arange(2)}, path, 'abc')
        with open(path) as in_file:
            self.assertEqual(json.load(in_file),
                             {'value': 0.5, 'array': [0, 1],
                              'manifest_hash': 'abc'})

    def test_write_trajectories(self):
        scenario = networks.toy_scenario(2)
        outcome = sim.run_episode(
            evaluation.let_baseline_policy(scenario.graph), scenario,
            rng=np.random.default_rng(0))
        path = os.path.join(TEST_CACHE_DIR, 'trajectory.jsonl')
        data_io.write_trajectories(outcome, path, 'abc')
        with open(path) as in_file:
            records = [json.loads(line) for line in in_file]
        self.assertEqual(len(records), len(outcome.transitions))
        self.assertEqual([rec['step'] for rec in records],
                         list(range(len(records))))
        self.assertTrue(all(rec['manifest_hash'] == 'abc'
                            for rec in records))


class TestResultsTables(CacheDirTestCase):

    def test_toy_battery(self):
        results = rt.toy_battery(policies={'LET': rt.let_factory},
                                 trials=3)
        self.assertEqual(results.index.names, ['scenario', 'policy',
                                               'agent'])
        self.assertEqual(results.shape[0], 6)
        self.assertTrue(np.all(results['on_time_probability'].between(0,
                                                                      1)))
        self.assertRaises(TypeError, rt.toy_battery, unexpected=1)

    def test_random_od_pairs(self):
        graph = networks.toy_network()
        pairs = rt.random_od_pairs(graph, 5, np.random.default_rng(0))
        self.assertEqual(len(set(pairs)), 5)
        for origin, dest in pairs:
            self.assertTrue(np.isfinite(graphs.least_expected_time(
                graph, origin, dest)))
        self.assertRaises(InputError, rt.random_od_pairs, graph, 1000,
                          np.random.default_rng(0))
        weights = rt.random_weights(4, np.random.default_rng(0))
        self.assertAlmostEqual(weights.sum(), 1.0)

    def test_team_budgets(self):
        graph = networks.toy_network()
        budgets = rt.team_budgets(graph, [(9, 12), (1, 8)], [0.7, 0.3],
                                  1.05)
        numpy.testing.assert_allclose(budgets, [1.05 * 6.0, 1.2 * 11.5])
        scenario = rt.team_scenario(graph, [(9, 12), (1, 8)], [7, 3], 1.0)
        numpy.testing.assert_allclose(scenario.weights, [0.7, 0.3])

    def test_budget_battery(self):
        graph = networks.toy_network()
        kwargs = {'weights': [0.5, 0.3, 0.2], 'trials': 3,
                  'cache_dir': TEST_CACHE_DIR}
        with warnings.catch_warnings(record=True) as war:
            warnings.simplefilter('always')
            results = rt.budget_battery({'LET': rt.let_factory}, graph,
                                        [(9, 12), (1, 8), (8, 1)],
                                        save=True, **kwargs)
            self.assertTrue(any('unreachable' in str(w.message)
                                for w in war))
        self.assertEqual(results.attrs['skipped'], [(8, 1)])
        self.assertEqual(list(results.index.get_level_values('multiplier')),
                         [0.95, 1.0, 1.05])
        self.assertTrue(np.all(results['n_agents'] == 2))
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            loaded = rt.budget_battery({'LET': rt.let_factory}, graph,
                                       [(9, 12), (1, 8), (8, 1)],
                                       load=True, **kwargs)
        pd.testing.assert_frame_equal(results, loaded)
        self.assertRaises(InputError, rt.budget_battery,
                          {'LET': rt.let_factory}, graph, [])
        self.assertRaises(TypeError, rt.budget_battery,
                          {'LET': rt.let_factory}, graph, [(9, 12)],
                          unexpected=1)

    def test_cache_depends_on_inputs(self):
        graph = networks.toy_network()
        edge = graph.edge_between(9, 10)
        edges = list(graph.edges)
        edges[edge.id] = graphs.EdgeAttr(edge.id, 9, 10, 3.0, 0.3)
        other = graphs.UncertainGraph(graph.nodes, edges)
        self.assertNotEqual(rt.input_hash(graph), rt.input_hash(other))
        self.assertNotEqual(rt.input_hash(graph, weights=[0.5, 0.5]),
                            rt.input_hash(graph, weights=[0.6, 0.4]))
        self.assertEqual(rt.input_hash(graph, weights=[0.5, 0.5]),
                         rt.input_hash(networks.toy_network(),
                                       weights=[0.5, 0.5]))
        kwargs = {'weights': [0.6, 0.4], 'trials': 2,
                  'multipliers': (1.0,), 'cache_dir': TEST_CACHE_DIR}
        pairs = [(9, 12), (1, 8)]
        rt.budget_battery({'LET': rt.let_factory}, graph, pairs, save=True,
                          **kwargs)
        with unittest.mock.patch.object(
                rt.evaluation, 'monte_carlo_sota',
                wraps=evaluation.monte_carlo_sota) as mocked:
            rt.budget_battery({'LET': rt.let_factory}, graph, pairs,
                              load=True, **kwargs)
            self.assertFalse(mocked.called)
            rt.budget_battery({'LET': rt.let_factory}, other, pairs,
                              load=True, **kwargs)
            self.assertTrue(mocked.called)
            mocked.reset_mock()
            kwargs['weights'] = [0.4, 0.6]
            rt.budget_battery({'LET': rt.let_factory}, graph, pairs,
                              load=True, **kwargs)
            self.assertTrue(mocked.called)

    def test_ablation_battery(self):
        settings = get_minimal_settings()
        settings.epochs = 2
        with warnings.catch_warnings(record=True) as war:
            warnings.simplefilter('always')
            results = rt.ablation_battery(
                networks.toy_scenario(2), settings,
                configurations=['full', 'no_attention'], trials=2,
                save=True, cache_dir=TEST_CACHE_DIR)
            self.assertTrue(any('did not converge' in str(w.message)
                                for w in war))
        self.assertEqual(list(results.index), ['full', 'no_attention'])
        self.assertFalse(results['converged'].any())
        self.assertFalse(rt.ablation_settings(settings,
                                              'no_attention').attention)
        self.assertEqual(rt.ablation_settings(
            settings, 'node2vec').embedding_method, 'node2vec')


class TestPlotting(CacheDirTestCase):

    def test_plot_success_rates(self):
        results = rt.toy_battery(policies={'LET': rt.let_factory},
                                     trials=2)
        for include_team in (True, False):
            fig = marvelnav.plots.plot_success_rates(
                results, include_team=include_team)
            self.assertIsInstance(fig, matplotlib.figure.Figure)
        self.assertRaises(TypeError, marvelnav.plots.plot_success_rates,
                          results, unexpected=1)
        path = os.path.join(TEST_CACHE_DIR, 'toy.csv')
        marvelnav.plots.write_plot_data(results, path, 'abc')
        frame, manifest_hash = data_io.read_csv(path)
        self.assertEqual(manifest_hash, 'abc')
        self.assertEqual(frame.shape[0], 6)

    def test_plot_budget_battery(self):
        results = pd.DataFrame({
            'policy': ['LET'] * 3 + ['expert'] * 3,
            'multiplier': [0.95, 1.0, 1.05] * 2,
            'team_probability': [0.2, 0.5, 0.7, 0.3, 0.6, 0.8],
            'std_error': [0.01] * 6}).set_index(['policy', 'multiplier'])
        fig = marvelnav.plots.plot_budget_battery(results)
        self.assertIsInstance(fig, matplotlib.figure.Figure)

    def test_plot_training_log(self):
        log = pd.DataFrame({'epoch': np.arange(20),
                            'objective': np.linspace(0, 1, 20),
                            'lr': np.full(20, 1e-3),
                            'expert_agreement': np.full(20, 0.5),
                            'entropy_term': np.zeros(20)})
        fig = marvelnav.plots.plot_training_log(log, window=5)
        self.assertIsInstance(fig, matplotlib.figure.Figure)
        self.assertRaises(TypeError, marvelnav.plots.plot_training_log, log,
                          unexpected=1)


class TestCommandLine(CacheDirTestCase):

    def run_cli(self, *args):
        return cli.main(list(args) + ['--out-dir', TEST_CACHE_DIR])

    def read(self, name):
        with open(os.path.join(TEST_CACHE_DIR, name)) as in_file:
            return in_file.read()

    def test_make_figure1(self):
        for command in ('make-figure1', 'make-toy'):
            self.assertEqual(self.run_cli(command), 0)
            graph = data_io.load_tntp(
                os.path.join(TEST_CACHE_DIR, 'toy_net.tntp'),
                os.path.join(TEST_CACHE_DIR, 'toy_uncertainty.csv'))
            self.assertEqual(graph, networks.toy_network())
            self.assertEqual(graph.n_nodes, 14)
            self.assertEqual(
                [graph.edges[e].label for e in graph.uncertain_edges],
                [graph.edge_between(13, 4).label])
            manifest = json.loads(self.read('manifest.json'))
            self.assertEqual(len(manifest['outputs']), 2)

    def test_help_and_version_return_ok(self):
        with unittest.mock.patch('sys.stdout'):
            self.assertEqual(cli.main(['--version']), 0)
            self.assertEqual(cli.main(['--help']), 0)
            self.assertEqual(cli.main(['eval', '--help']), 0)

    def test_simulate_is_reproducible(self):
        self.assertEqual(self.run_cli('simulate', '--seed', '7'), 0)
        first = self.read('trajectory.jsonl')
        self.assertEqual(self.run_cli('simulate', '--seed', '7'), 0)
        self.assertEqual(self.read('trajectory.jsonl'), first)
        self.assertGreater(len(first.splitlines()), 0)

    def test_eval(self):
        self.assertEqual(self.run_cli('eval', '--trials', '5'), 0)
        manifest = json.loads(self.read('manifest.json'))
        frame, manifest_hash = data_io.read_csv(
            os.path.join(TEST_CACHE_DIR, 'report.csv'), index_col=0)
        self.assertEqual(manifest_hash, manifest['manifest_hash'])
        self.assertEqual(list(frame.index), ['A', 'B', 'team'])
        report = json.loads(self.read('report.json'))
        self.assertEqual(report['manifest_hash'], manifest['manifest_hash'])

    def test_embed(self):
        config = os.path.join(TEST_CACHE_DIR, 'config.yaml')
        write_text(config, 'embed_dim: 4\nembed_epochs: 5\n')
        self.assertEqual(self.run_cli('embed', '--config', config), 0)
        emb = embedding.load_embeddings(os.path.join(TEST_CACHE_DIR,
                                                     'embeddings.txt'))
        self.assertEqual(emb.dim, 4)

    def test_usage_errors(self):
        self.assertEqual(self.run_cli('bogus'), 1)
        self.assertEqual(self.run_cli('simulate', '--policy', 'nope'), 1)
        self.assertEqual(self.run_cli('simulate', '--policy', 'marvel'), 1)
        config = os.path.join(TEST_CACHE_DIR, 'config.yaml')
        write_text(config, 'embed_dim: 0\n')
        self.assertEqual(self.run_cli('simulate', '--config', config), 1)
        write_text(config, 'unexpected: 1\n')
        self.assertEqual(self.run_cli('simulate', '--config', config), 1)

    def test_data_errors(self):
        scenario = os.path.join(TEST_CACHE_DIR, 'scenario.yaml')
        write_text(scenario, 'network: missing.tntp\nagents:\n'
                   '  - {origin: 1, destination: 2, budget: 1.0}\n')
        self.assertEqual(self.run_cli('simulate', '--scenario', scenario),
                         2)
        write_text(scenario, 'network: toy\nagents: []\n')
        self.assertEqual(self.run_cli('simulate', '--scenario', scenario),
                         2)


# Helper functions
# ----------------


def get_minimal_settings():
    """
    Get a marvelnav settings object with tiny embeddings and networks so
    that tests run quickly.
    """
    settings = marvelnav.settings.MarvelSettings()
    settings.embed_dim = 4
    settings.embed_epochs = 5
    settings.refresh_epochs = 2
    settings.heads = 2
    settings.layers = 1
    settings.head_dim = 3
    settings.epochs = 3
    return settings


class AgreementRecorder(object):

    """Acts with a policy and counts the moves an expert would also make."""

    def __init__(self, policy, expert_policy):
        self.policy = policy
        self.expert = expert_policy
        self.matches = []

    def act(self, scenario, belief, agent_id, rng=None):
        edge_id = self.policy.act(scenario, belief, agent_id, rng)
        decision = self.expert.decide(scenario, belief, agent_id)
        self.matches.append(edge_id == decision.edge)
        return edge_id

    def rate(self):
        return float(np.mean(self.matches))


def diamond_scenario(budget):
    """
    Single agent going 0 -> 2 with deterministic costs: either the certain
    edge 0 -> 2 (cost 5), or 0 -> 1 (cost 1) then the uncertain 1 -> 2
    (cost 1, open with probability 0.5), returning via 1 -> 0 if blocked.
    """
    graph = graphs.UncertainGraph.from_edge_list(
        [(0, 1, 1.0, 0.0, 1.0),
         (1, 2, 1.0, 0.0, 0.5),
         (1, 0, 1.0, 0.0, 1.0),
         (0, 2, 5.0, 0.0, 1.0)])
    return sim.ScenarioConfig(graph, [sim.AgentSpec(0, 0, 2, budget, 1.0)])


def toy_midway_belief(scenario):
    """Robot A at node 10 after 2.0 and Robot B at node 3 after 5.0."""
    belief = graphs.initial_belief(scenario.graph, scenario.agents)
    belief = belief.with_agent('A', position=10, spent=2.0)
    return belief.with_agent('B', position=3, spent=5.0)


def make_step(surrogate, delta_h, agent='A'):
    """TrajectoryStep with unit log-probability and KL gradients of 1 and
    2 in every coordinate."""
    return trainer.TrajectoryStep(
        belief_key=(), agent=agent, node=9, edge=0, log_prob=0.0, cost=1.0,
        delta_h=delta_h, expert_edge=0, surrogate=surrogate,
        grad_log_prob=np.ones(3), grad_kl=np.full(3, 2.0), kl=0.1)


def numerical_gradient(func, flat, eps=1e-6):
    """Central finite difference gradient of a scalar function."""
    flat = np.asarray(flat, dtype=float)
    grad = np.zeros_like(flat)
    for i in range(flat.shape[0]):
        step = np.zeros_like(flat)
        step[i] = eps
        grad[i] = (func(flat + step) - func(flat - step)) / (2 * eps)
    return grad


def write_text(path, text):
    with open(path, 'w') as out_file:
        out_file.write(text)


if __name__ == '__main__':
    unittest.main()
