#!/usr/bin/env python
"""
Command line interface.

Exit codes are 0 on success, 1 for usage and configuration errors, 2 for
data and input errors and 3 when training diverges.
"""

import argparse
import os
import sys
import numpy as np
import yaml
import marvelnav
import marvelnav.data_io as data_io
import marvelnav.embedding as embedding
import marvelnav.evaluation as evaluation
import marvelnav.expert as expert
import marvelnav.networks as networks
import marvelnav.policy as policy_net
import marvelnav.results_tables as rt
import marvelnav.settings
import marvelnav.simulation as sim
import marvelnav.trainer as trainer
from marvelnav.errors import (ConfigurationError, DataError, InputError,
                              MarvelError, NumericalError, UnreachableError)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):

    """Invalid command line."""


class ArgumentParser(argparse.ArgumentParser):

    """Parser raising UsageError instead of exiting with status 2."""

    def error(self, message):
        raise UsageError('{0}: {1}'.format(self.prog, message))


def get_parser():
    common = ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=0,
                        help='master random seed')
    common.add_argument('--config', default=None,
                        help='YAML file of MarvelSettings values')
    common.add_argument('--out-dir', default='.',
                        help='directory for output files')
    common.add_argument('--trials', type=int, default=10000,
                        help='Monte-Carlo evaluation episodes')
    common.add_argument('--threads', type=int, default=1,
                        help='processes used for evaluation')
    common.add_argument('--scenario', default=None,
                        help='YAML scenario file (default: the '
                        'illustrative network with weights [0.3, 0.7])')
    parser = ArgumentParser(
        prog='marvelnav',
        description='Multi-agent reliable navigation on uncertain networks.')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + marvelnav.__version__)
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True
    subparsers.add_parser('embed', parents=[common],
                          help='train and export node embeddings')
    train = subparsers.add_parser('train', parents=[common],
                                  help='train the attention policy')
    train.add_argument('--epochs', type=int, default=None)
    for name, helptext in (('eval', 'Monte-Carlo evaluation'),
                           ('simulate', 'one seeded episode')):
        sub = subparsers.add_parser(name, parents=[common], help=helptext)
        sub.add_argument('--policy', choices=['let', 'expert', 'marvel'],
                         default='let')
        sub.add_argument('--checkpoint', default=None,
                         help='policy checkpoint (with --policy marvel)')
        if name == 'eval':
            sub.add_argument('--budget-battery', type=int, default=0,
                             metavar='N_PAIRS',
                             help='evaluate N random OD pairs at tight, '
                             'exact and relaxed budgets instead')
    subparsers.add_parser('ablate', parents=[common],
                          help='train and evaluate each ablation')
    subparsers.add_parser('make-figure1', parents=[common],
                          aliases=['make-toy'],
                          help='write the illustrative network')
    return parser


def load_settings(args):
    """MarvelSettings from --config, seeded by --seed."""
    values = {}
    if args.config is not None:
        with open(args.config) as in_file:
            try:
                values = yaml.safe_load(in_file) or {}
            except yaml.YAMLError as err:
                raise DataError('invalid YAML: {0}'.format(err),
                                path=args.config)
    values['seed'] = args.seed
    if getattr(args, 'epochs', None) is not None:
        values['epochs'] = args.epochs
    try:
        settings = marvelnav.settings.MarvelSettings(**values)
    except TypeError as err:
        raise ConfigurationError(str(err))
    return settings.check()


def load_scenario(args):
    if args.scenario is None:
        return networks.toy_scenario(2, seed=args.seed)
    return data_io.load_scenario(args.scenario)


def make_policy(args, scenario, settings):
    if args.policy == 'let':
        return evaluation.let_baseline_policy(scenario.graph)
    elif args.policy == 'expert':
        return expert.ExpertPolicy.from_settings(settings)
    if args.checkpoint is None:
        raise UsageError('--policy marvel needs --checkpoint')
    return policy_net.load_policy(args.checkpoint)


def make_manifest(args, argv, settings):
    config = {'settings': settings.get_settings_dict(),
              'scenario': args.scenario,
              'arguments': {key: value for key, value in vars(args).items()
                            if key not in ('out_dir', 'threads')}}
    return data_io.RunManifest(' '.join(argv), data_io.config_hash(config),
                               {'seed': args.seed})


def run_command(args, argv):
    """Carry out a parsed command; returns the manifest."""
    settings = load_settings(args)
    manifest = make_manifest(args, argv, settings)
    if not os.path.isdir(args.out_dir):
        os.makedirs(args.out_dir)

    def out(name):
        path = os.path.join(args.out_dir, name)
        manifest.outputs.append(path)
        return path

    parallel = args.threads > 1
    if args.command in ('make-figure1', 'make-toy'):
        data_io.export_tntp(networks.toy_network(),
                            out('toy_net.tntp'),
                            out('toy_uncertainty.csv'))
    elif args.command == 'embed':
        scenario = load_scenario(args)
        policy = policy_net.GatPolicy.initialise(settings)
        emb = policy.embeddings(scenario.graph,
                                scenario.graph.prior_belief(),
                                scenario.destinations)
        embedding.save_embeddings(emb, out('embeddings.txt'))
    elif args.command == 'train':
        scenario = load_scenario(args)
        params, log = trainer.train(scenario, settings,
                                    checkpoint_dir=args.out_dir,
                                    manifest_hash=manifest.manifest_hash)
        policy_net.save_policy(policy_net.GatPolicy(params, settings),
                               out('policy.json'),
                               manifest_hash=manifest.manifest_hash)
        data_io.write_csv(log, out('training_log.csv'),
                          manifest.manifest_hash, index=False)
    elif args.command == 'eval':
        scenario = load_scenario(args)
        if args.budget_battery:
            rng = np.random.default_rng(args.seed)
            od_pairs = rt.random_od_pairs(scenario.graph,
                                          args.budget_battery, rng)
            results = rt.budget_battery(
                {args.policy: lambda scen: make_policy(args, scen,
                                                       settings)},
                scenario.graph, od_pairs, trials=args.trials,
                master_seed=args.seed, parallel=parallel,
                max_workers=args.threads)
            data_io.write_csv(results.reset_index(), out('budget.csv'),
                              manifest.manifest_hash, index=False)
        else:
            report = evaluation.monte_carlo_sota(
                make_policy(args, scenario, settings), scenario,
                trials=args.trials, master_seed=args.seed,
                parallel=parallel, max_workers=args.threads)
            data_io.write_csv(report.table, out('report.csv'),
                              manifest.manifest_hash)
            data_io.write_json(report.to_dict(), out('report.json'),
                               manifest.manifest_hash)
    elif args.command == 'ablate':
        scenario = load_scenario(args)
        results = rt.ablation_battery(scenario, settings, trials=args.trials,
                                      master_seed=args.seed,
                                      parallel=parallel,
                                      max_workers=args.threads)
        data_io.write_csv(results, out('ablation.csv'),
                          manifest.manifest_hash)
    elif args.command == 'simulate':
        scenario = load_scenario(args)
        outcome = sim.run_episode(make_policy(args, scenario, settings),
                                  scenario,
                                  rng=evaluation.episode_rng(args.seed, 0))
        data_io.write_trajectories(outcome, out('trajectory.jsonl'),
                                   manifest.manifest_hash)
    manifest.write(os.path.join(args.out_dir, 'manifest.json'))
    return manifest


def main(argv=None):
    """
    Run the command line interface.

    Parameters
    ----------
    argv: list of str or None, optional
        Arguments excluding the program name; defaults to sys.argv[1:].

    Returns
    -------
    int
        Exit code.
    """
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = get_parser().parse_args(argv)
        run_command(args, argv)
    except SystemExit as err:
        # --help and --version
        return EXIT_OK if not err.code else EXIT_USAGE
    except (UsageError, ConfigurationError) as err:
        print('error: {0}'.format(err), file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as err:
        print('numerical error: {0}'.format(err), file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, InputError, UnreachableError, MarvelError,
            OSError) as err:
        print('data error: {0}'.format(err), file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def console_main():
    sys.exit(main())


if __name__ == '__main__':
    console_main()
