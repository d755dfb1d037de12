"""Exception hierarchy shared across the toolkit.

Exit codes mirror the CLI contract: 2 config, 3 data, 4 runtime.
"""


class MspaceError(Exception):
    exit_code = 4


class ConfigError(MspaceError):
    """Invalid run configuration, flags, or generator parameters."""

    exit_code = 2


class DataError(MspaceError):
    """Malformed, inconsistent, or insufficient input data."""

    exit_code = 3
