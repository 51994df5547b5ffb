"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
DataError -> 2, InternalError -> 3.
"""

from __future__ import annotations


class HemosegError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(HemosegError):
    """Invalid configuration: bad flag values, malformed config keys."""


class DataError(HemosegError):
    """Unusable input data: broken files, dimension mismatches, no brain."""


class InternalError(HemosegError):
    """A computed quantity violated an invariant the code relies on."""
