#!/usr/bin/env python
"""
Reading and writing networks, scenarios and results.

Networks use the TNTP link file format with an optional uncertainty sidecar
CSV with columns edge_id, sigma and p_open, where edge_id is the 0-based
position of the link in the network file. Every CSV artifact starts with a
'# manifest: <hash>' line and every JSON artifact carries a manifest_hash
entry, tying results to the run which produced them.
"""

import datetime
import hashlib
import json
import os
import networkx
import numpy as np
import pandas as pd
import scipy
import yaml
import marvelnav
import marvelnav.graphs as graphs
import marvelnav.networks as networks
import marvelnav.simulation as sim
from marvelnav.errors import DataError, InputError

DEFAULT_SIGMA_FRACTION = 0.25
TNTP_COLUMNS = ['init_node', 'term_node', 'capacity', 'length',
                'free_flow_time', 'b', 'power', 'speed', 'toll',
                'link_type']
SIDECAR_COLUMNS = ['edge_id', 'sigma', 'p_open']


# Networks
# --------


def _read_tntp_metadata(lines, path):
    """Metadata dict and the index of the first line after it."""
    metadata = {}
    for number, line in enumerate(lines):
        stripped = line.strip()
        if stripped.startswith('<END OF METADATA>'):
            return metadata, number + 1
        if stripped.startswith('<'):
            key, _, value = stripped[1:].partition('>')
            metadata[key.strip()] = value.strip()
        elif stripped and not stripped.startswith('~'):
            raise DataError('data before <END OF METADATA>', path=path,
                            line=number + 1)
    raise DataError('missing <END OF METADATA>', path=path)


def _metadata_int(metadata, key, path):
    try:
        return int(metadata[key])
    except KeyError:
        raise DataError('missing <{0}>'.format(key), path=path)
    except ValueError:
        raise DataError('<{0}> is not an integer: {1!r}'.format(
            key, metadata[key]), path=path)


def read_tntp_links(path):
    """
    Parse a TNTP network file.

    Returns
    -------
    links: list of (init_node, term_node, free_flow_time) tuples
    n_nodes: int
    """
    with open(path) as in_file:
        lines = in_file.read().splitlines()
    metadata, start = _read_tntp_metadata(lines, path)
    n_nodes = _metadata_int(metadata, 'NUMBER OF NODES', path)
    n_links = _metadata_int(metadata, 'NUMBER OF LINKS', path)
    links = []
    for number, line in enumerate(lines[start:], start=start + 1):
        stripped = line.strip()
        if not stripped or stripped.startswith('~'):
            continue
        fields = stripped.rstrip(';').split()
        if len(fields) < 5:
            raise DataError('expected at least 5 fields, found {0}'.format(
                len(fields)), path=path, line=number)
        try:
            source = int(fields[0])
            target = int(fields[1])
            fft = float(fields[4])
        except ValueError:
            raise DataError('malformed link row {0!r}'.format(stripped),
                            path=path, line=number)
        for node in (source, target):
            if not 1 <= node <= n_nodes:
                raise DataError(
                    'link references node {0} but the file declares {1} '
                    'nodes'.format(node, n_nodes), path=path, line=number)
        if not fft > 0:
            raise DataError('free flow time must be > 0, got {0}'.format(
                fft), path=path, line=number)
        links.append((source, target, fft))
    if len(links) != n_links:
        raise DataError('<NUMBER OF LINKS> is {0} but {1} links were read'
                        .format(n_links, len(links)), path=path)
    return links, n_nodes


def load_sidecar(path, n_edges):
    """
    Read an uncertainty sidecar.

    Returns
    -------
    pandas DataFrame
        Indexed by edge_id with columns sigma and p_open; missing cells are
        NaN.
    """
    try:
        frame = pd.read_csv(path, comment='#',
                            float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise DataError(str(err), path=path)
    missing = [col for col in SIDECAR_COLUMNS if col not in frame.columns]
    if missing:
        raise DataError('missing columns {0}'.format(missing), path=path,
                        line=1)
    with open(path) as in_file:
        # one-based numbers of the header and data lines
        numbers = [number for number, line in enumerate(in_file, start=1)
                   if line.strip() and not line.lstrip().startswith('#')]
    for row, record in enumerate(frame.itertuples(index=False)):
        line = numbers[row + 1]
        edge_id = record.edge_id
        if (pd.isnull(edge_id) or edge_id != int(edge_id) or
                not 0 <= edge_id < n_edges):
            raise DataError('edge_id {0!r} outside 0..{1}'.format(
                edge_id, n_edges - 1), path=path, line=line)
        if not pd.isnull(record.sigma) and not record.sigma >= 0:
            raise DataError('sigma must be >= 0, got {0}'.format(
                record.sigma), path=path, line=line)
        if not pd.isnull(record.p_open) and not 0 < record.p_open <= 1:
            raise DataError('p_open must be in (0, 1], got {0}'.format(
                record.p_open), path=path, line=line)
    frame['edge_id'] = frame['edge_id'].astype(int)
    if frame['edge_id'].duplicated().any():
        raise DataError('duplicate edge ids {0}'.format(
            sorted(set(frame['edge_id'][frame['edge_id'].duplicated()]))),
            path=path)
    return frame.set_index('edge_id')[['sigma', 'p_open']]


def load_tntp(network_path, sidecar_path=None):
    """
    Load an uncertain network from a TNTP file and an optional sidecar.

    Edge means are the free flow times. Edges absent from the sidecar (or
    with empty cells) get sigma = 0.25 mu and p_open = 1.

    Parameters
    ----------
    network_path: str
    sidecar_path: str or None, optional

    Returns
    -------
    UncertainGraph
    """
    links, n_nodes = read_tntp_links(network_path)
    if sidecar_path is not None:
        sidecar = load_sidecar(sidecar_path, len(links))
    else:
        sidecar = pd.DataFrame(columns=['sigma', 'p_open'])
    records = []
    for edge_id, (source, target, fft) in enumerate(links):
        sigma = DEFAULT_SIGMA_FRACTION * fft
        p_open = 1.0
        if edge_id in sidecar.index:
            row = sidecar.loc[edge_id]
            if not pd.isnull(row['sigma']):
                sigma = float(row['sigma'])
            if not pd.isnull(row['p_open']):
                p_open = float(row['p_open'])
        records.append((source, target, fft, sigma, p_open))
    try:
        return graphs.UncertainGraph.from_edge_list(
            records, nodes=range(1, n_nodes + 1))
    except InputError as err:
        raise DataError(str(err), path=network_path)


def export_tntp(graph, network_path, sidecar_path=None):
    """
    Write a graph in the format read by load_tntp. Nodes must be the
    integers 1..n. The sidecar lists every edge so that reloading gives an
    identical graph.
    """
    if graph.nodes != tuple(range(1, graph.n_nodes + 1)):
        raise InputError('TNTP export needs nodes numbered 1..n')
    lines = ['<NUMBER OF ZONES> {0}'.format(graph.n_nodes),
             '<NUMBER OF NODES> {0}'.format(graph.n_nodes),
             '<FIRST THRU NODE> 1',
             '<NUMBER OF LINKS> {0}'.format(len(graph.edges)),
             '<END OF METADATA>', '', '',
             '~ \t' + '\t'.join(TNTP_COLUMNS) + '\t;']
    for edge in graph.edges:
        fields = [edge.source, edge.target, 0, '%.17g' % edge.mu,
                  '%.17g' % edge.mu, 0.15, 4, 0, 0, 1]
        lines.append('\t' + '\t'.join(str(f) for f in fields) + '\t;')
    with open(network_path, 'w') as out_file:
        out_file.write('\n'.join(lines) + '\n')
    if sidecar_path is not None:
        export_sidecar(graph, sidecar_path)


def export_sidecar(graph, path):
    """Write sigma and p_open of every edge."""
    frame = pd.DataFrame({'edge_id': [edge.id for edge in graph.edges],
                          'sigma': [edge.sigma for edge in graph.edges],
                          'p_open': [edge.p_open for edge in graph.edges]})
    frame.to_csv(path, index=False, float_format='%.17g')


# Scenarios
# ---------


def _resolve(path, base_dir):
    if path is None or os.path.isabs(path):
        return path
    return os.path.join(base_dir, path)


def scenario_from_dict(config, base_dir='.'):
    """
    Build a ScenarioConfig from a parsed scenario file.

    Keys are network (a TNTP path, or 'toy' for the built-in
    illustrative network, or 'sioux_falls'), sidecar, truncate, seed and
    agents, a list of dicts with id, origin, destination, weight and either
    budget or budget_multiplier (a multiple of the least expected time).
    Relative paths are resolved against base_dir.
    """
    config = dict(config)
    network = config.pop('network', None)
    if network is None:
        raise DataError('scenario has no network')
    sidecar = _resolve(config.pop('sidecar', None), base_dir)
    if network == 'toy':
        graph = networks.toy_network()
    elif network == 'sioux_falls':
        graph = networks.sioux_falls()
    else:
        graph = load_tntp(_resolve(network, base_dir), sidecar)
    agent_dicts = config.pop('agents', None)
    if not agent_dicts:
        raise DataError('scenario has no agents')
    kwargs = {'seed': config.pop('seed', 0),
              'truncate': config.pop('truncate', True)}
    if config:
        raise DataError('unexpected scenario keys {0}'.format(
            sorted(config)))
    agents = []
    multipliers = []
    for number, agent in enumerate(agent_dicts):
        try:
            origin = agent['origin']
            destination = agent['destination']
            if 'budget' in agent:
                budget = agent['budget']
                multipliers.append(None)
            else:
                multiplier = agent['budget_multiplier']
                budget = multiplier * graphs.least_expected_time(
                    graph, origin, destination)
                multipliers.append(multiplier)
            agents.append(sim.AgentSpec(agent.get('id', number), origin,
                                        destination, budget,
                                        agent.get('weight', 1.0)))
        except KeyError as err:
            raise DataError('agent {0} is missing {1}'.format(number, err))
    if all(mult is not None for mult in multipliers):
        kwargs['multipliers'] = multipliers
    return sim.ScenarioConfig(graph, agents, **kwargs)


def load_scenario(path):
    """Read a YAML scenario file (see scenario_from_dict)."""
    with open(path) as in_file:
        try:
            config = yaml.safe_load(in_file)
        except yaml.YAMLError as err:
            raise DataError('invalid YAML: {0}'.format(err), path=path)
    if not isinstance(config, dict):
        raise DataError('scenario file must contain a mapping', path=path)
    return scenario_from_dict(config,
                              base_dir=os.path.dirname(os.path.abspath(path)))


# Manifests and results
# ---------------------


def library_versions():
    """Versions of the packages results depend on."""
    return {'marvelnav': marvelnav.__version__,
            'numpy': np.__version__,
            'scipy': scipy.__version__,
            'pandas': pd.__version__,
            'networkx': networkx.__version__}


class RunManifest(object):

    """
    Description of a run sufficient to reproduce it.

    The hash covers the command, configuration hash, seeds and library
    versions; the timestamp and output paths are recorded but do not change
    it, so repeating a run reproduces its artifacts byte for byte.
    """

    def __init__(self, command, config_hash, seeds, **kwargs):
        self.command = command
        self.config_hash = config_hash
        self.seeds = dict(seeds)
        self.versions = kwargs.pop('versions', library_versions())
        self.timestamp = kwargs.pop(
            'timestamp', datetime.datetime.now().isoformat())
        self.outputs = list(kwargs.pop('outputs', []))
        if kwargs:
            raise TypeError('Unexpected **kwargs: {0}'.format(kwargs))

    @property
    def manifest_hash(self):
        blob = json.dumps({'command': self.command,
                           'config_hash': self.config_hash,
                           'seeds': self.seeds,
                           'versions': self.versions}, sort_keys=True)
        return hashlib.sha256(blob.encode('utf-8')).hexdigest()

    def to_dict(self):
        return {'command': self.command,
                'config_hash': self.config_hash,
                'seeds': self.seeds,
                'versions': self.versions,
                'timestamp': self.timestamp,
                'outputs': self.outputs,
                'manifest_hash': self.manifest_hash}

    def write(self, path):
        with open(path, 'w') as out_file:
            json.dump(self.to_dict(), out_file, sort_keys=True, indent=2)


def config_hash(config):
    """SHA-256 of a JSON-serialisable configuration."""
    blob = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode('utf-8')).hexdigest()


def write_csv(frame, path, manifest_hash, **kwargs):
    """Write a DataFrame as CSV below a manifest line."""
    with open(path, 'w') as out_file:
        out_file.write('# manifest: {0}\n'.format(manifest_hash))
        frame.to_csv(out_file, **kwargs)


def read_csv(path, **kwargs):
    """
    Read a CSV written by write_csv.

    Returns
    -------
    frame: pandas DataFrame
    manifest_hash: str
    """
    with open(path) as in_file:
        first = in_file.readline()
        if not first.startswith('# manifest: '):
            raise DataError('missing manifest line', path=path, line=1)
        frame = pd.read_csv(in_file, **kwargs)
    return frame, first[len('# manifest: '):].strip()


def write_json(doc, path, manifest_hash):
    """Write a JSON document with a manifest_hash entry."""
    doc = dict(doc)
    doc['manifest_hash'] = manifest_hash
    with open(path, 'w') as out_file:
        json.dump(doc, out_file, sort_keys=True, indent=2, default=_to_json)


def write_trajectories(outcome, path, manifest_hash):
    """Write an episode's step records as JSON lines."""
    with open(path, 'w') as out_file:
        for record in outcome.to_records():
            record = dict(record)
            record['manifest_hash'] = manifest_hash
            out_file.write(json.dumps(record, sort_keys=True,
                                      default=_to_json) + '\n')


def _to_json(value):
    """Convert numpy scalars and arrays for json.dump."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError('{0!r} is not JSON serialisable'.format(value))
