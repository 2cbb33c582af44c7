#!/usr/bin/env python
"""
Exception types raised by marvelnav.

Each error class maps onto one failure family so callers (in particular the
command line interface) can decide how to report it. Errors which signal bad
input values also subclass ValueError, and broken internal consistency checks
subclass AssertionError.
"""


class MarvelError(Exception):

    """Base class for all marvelnav errors."""


class InputError(MarvelError, ValueError):

    """A node id, agent id or other argument refers to something which does
    not exist."""


class UnreachableError(MarvelError):

    """No path exists between the requested nodes."""


class InvariantError(MarvelError, AssertionError):

    """An internal consistency condition does not hold (for example a belief
    transition from Open back to Unknown, or a stale forward cache)."""


class ContractError(InvariantError):

    """A simulator move was requested which the current state does not
    allow."""


class ConfigurationError(MarvelError, ValueError):

    """Settings are invalid or do not match the data they are used with."""


class DeadEndError(MarvelError):

    """An agent has no traversable outgoing edge to choose from."""


class NumericalError(MarvelError, ArithmeticError):

    """A computation produced non-finite values."""


class DataError(MarvelError, ValueError):

    """
    A data file could not be parsed.

    Parameters
    ----------
    message: str
    path: str or None, optional
        File being read.
    line: int or None, optional
        One-based line number of the offending row.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        location = ''
        if path is not None:
            location += str(path)
        if line is not None:
            location += ':{0}'.format(line)
        if location:
            message = location + ': ' + message
        MarvelError.__init__(self, message)
