"""Exception taxonomy shared across the library and the CLI.

Each class maps to a process exit code so shell pipelines can distinguish
bad configuration from bad data from numerical blow-ups.
"""


class DpnoError(Exception):
    exit_code = 1


class ConfigError(DpnoError):
    """Invalid configuration: bad hyperparameters, unknown keys, mismatched manifests."""

    exit_code = 2


class DataError(DpnoError):
    """Missing, corrupt, or inadmissible data artifacts."""

    exit_code = 3


class NumericError(DpnoError):
    """Numerical failure: non-finite loss, solver non-convergence, blow-up."""

    exit_code = 4
