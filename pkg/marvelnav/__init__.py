from marvelnav._version import __version__
