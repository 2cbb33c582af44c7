#!/usr/bin/env python
"""
marvelnav setup module.

Based on https://github.com/pypa/sampleproject/blob/master/setup.py.
"""
import os
import setuptools


def get_package_dir():
    """Get the file path for marvelnav's directory."""
    return os.path.abspath(os.path.dirname(__file__))


def get_long_description():
    """Get PyPI long description from its own .rst file as PyPI does not render
    the README well."""
    with open(os.path.join(get_package_dir(), 'README.rst')) as readme_file:
        long_description = readme_file.read()
    return long_description


def get_version():
    """Get single-source __version__."""
    pkg_dir = get_package_dir()
    with open(os.path.join(pkg_dir, 'marvelnav/_version.py')) as ver_file:
        string = ver_file.read()
    return string.strip().replace('__version__ = ', '').replace('\'', '')


setuptools.setup(name='marvelnav',
                 version=get_version(),
                 description=('Multi-agent navigation with on-time arrival '
                              'guarantees on networks with uncertain edges.'),
                 long_description=get_long_description(),
                 long_description_content_type='text/x-rst',
                 license='MIT',
                 keywords=('canadian-traveller-problem graph-attention '
                           'policy-gradient multi-agent-routing'),
                 classifiers=[  # Optional
                     'Development Status :: 4 - Beta',
                     'Intended Audience :: Science/Research',
                     'License :: OSI Approved :: MIT License',
                     'Programming Language :: Python :: 3',
                     'Programming Language :: Python :: 3.7',
                     'Programming Language :: Python :: 3.8',
                     'Topic :: Scientific/Engineering :: Artificial '
                     'Intelligence',
                     'Topic :: Scientific/Engineering :: Information Analysis',
                 ],
                 packages=['marvelnav'],
                 package_data={'marvelnav': ['data/*.tntp', 'data/*.csv',
                                             'data/*.yaml']},
                 python_requires='>=3.7',
                 install_requires=['numpy>=1.17',
                                   'scipy>=1.0.0',
                                   'pandas>=1.0',
                                   'matplotlib>=2.1.0',
                                   'nestcheck>=0.1.2',
                                   'networkx>=2.4',
                                   'pyyaml',
                                   'tqdm'],
                 entry_points={
                     'console_scripts': [
                         'marvelnav=marvelnav.cli:console_main']},
                 extras_require={
                     'docs': ['sphinx', 'numpydoc', 'sphinx-rtd-theme'],
                     'test': ['pytest', 'hypothesis', 'coverage']},
                 tests_require=['pytest', 'hypothesis', 'coverage'])
